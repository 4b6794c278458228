//! Text and JSON renderings of complexity reports and score summaries.

use std::fmt::Write as _;

use mgff_core::complexity::ComplexityReport;
use mgff_core::scoring::ScoreReport;
use serde::Serialize;

/// One row per layer followed by a total line.
pub fn complexity_table(r: &ComplexityReport) -> String {
    let mut out = String::new();
    let ops = r.frames.is_some();
    let _ = write!(out, "{:<22} {:>12} {:>10}", "layer", "params", "buffers");
    if ops {
        let _ = write!(out, " {:>16} {:>14}", "macs", "aux_flops");
    }
    out.push('\n');
    for l in &r.layers {
        let _ = write!(out, "{:<22} {:>12} {:>10}", l.name, l.params, l.buffers);
        if ops {
            let _ = write!(out, " {:>16} {:>14}", l.macs, l.aux_flops);
        }
        out.push('\n');
    }
    let _ = write!(
        out,
        "{:<22} {:>12} {:>10}",
        "total", r.total_params, r.total_buffers
    );
    if ops {
        let _ = write!(out, " {:>16} {:>14}", r.total_macs, r.total_aux_flops);
    }
    out.push('\n');
    let _ = writeln!(out, "total params: {:.3} M", r.total_params as f64 / 1e6);
    if let Some(frames) = r.frames {
        let _ = writeln!(
            out,
            "total FLOPs ({frames} frames, MAC = FLOP): {:.3} G",
            r.flops() as f64 / 1e9
        );
    }
    out
}

#[derive(Serialize)]
struct LayerRecord<'a> {
    name: &'a str,
    params: usize,
    buffers: usize,
    macs: u64,
    aux_flops: u64,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    frames: Option<usize>,
    total_params: usize,
    total_buffers: usize,
    total_macs: u64,
    total_aux_flops: u64,
    layers: Vec<LayerRecord<'a>>,
}

pub fn complexity_json(r: &ComplexityReport) -> String {
    let file = ReportFile {
        frames: r.frames,
        total_params: r.total_params,
        total_buffers: r.total_buffers,
        total_macs: r.total_macs,
        total_aux_flops: r.total_aux_flops,
        layers: r
            .layers
            .iter()
            .map(|l| LayerRecord {
                name: &l.name,
                params: l.params,
                buffers: l.buffers,
                macs: l.macs,
                aux_flops: l.aux_flops,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("report serialises");
    s.push('\n');
    s
}

pub fn score_summary(r: &ScoreReport) -> String {
    format!(
        "EER {:.3}%\nminDCF(p=0.01) {:.6}\nthreshold {:.6}\ntargets {}\nnontargets {}\n",
        100.0 * r.eer,
        r.min_dcf,
        r.threshold_at_eer,
        r.num_target,
        r.num_nontarget
    )
}
