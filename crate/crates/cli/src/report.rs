//! Plain-text table rendering for reports.

use spikechip_core::chipsim::{EnergyReport, EquivalenceReport, ResourceReport, TimingReport};
use spikechip_core::metrics::MetricsReport;

fn rule(width: usize) -> String {
    "-".repeat(width)
}

pub fn render_metrics(m: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "profile {} on digits {:?} (seed {})\n\n",
        m.profile, m.class_digits, m.master_seed
    ));

    out.push_str("Per-stage best test accuracy\n");
    out.push_str(&format!("{:<22} {:>8} {:>12} {:>12}\n", "Stage", "Epochs", "Best epoch", "Accuracy"));
    out.push_str(&format!("{}\n", rule(58)));
    for s in &m.stages {
        out.push_str(&format!(
            "{:<22} {:>8} {:>12} {:>12}\n",
            s.name,
            s.epochs,
            s.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
            s.best_accuracy
                .map(|a| format!("{:.2}%", 100.0 * a))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out.push_str(&format!(
        "\nFinal accuracy: {:.2}% ({} no-decision)\n",
        100.0 * m.final_accuracy,
        m.no_decision
    ));

    if !m.weight_stats.is_empty() {
        out.push_str("\nWeight matrix statistics\n");
        out.push_str(&format!(
            "{:<10} {:>8} {:>14} {:>16} {:>16} {:>16}\n",
            "Layer", "Size", "Active", "+1s", "-1s", "0s"
        ));
        out.push_str(&format!("{}\n", rule(84)));
        for w in &m.weight_stats {
            out.push_str(&format!(
                "{:<10} {:>8} {:>14} {:>16} {:>16} {:>16}\n",
                w.name,
                w.size,
                format!("{}/{}", w.active_neurons, w.total_neurons),
                format!("{} ({:.2}%)", w.pos, w.pos_pct),
                format!("{} ({:.2}%)", w.neg, w.neg_pct),
                format!("{} ({:.2}%)", w.zero, w.zero_pct),
            ));
        }
        if let Some(active) = m.active_hidden_neurons {
            out.push_str(&format!("Active hidden neurons after reduction: {active}\n"));
        }
    }

    out.push('\n');
    out.push_str(&render_confusion(&m.class_digits, &m.final_confusion));
    out
}

pub fn render_confusion(class_digits: &[u8], confusion: &[Vec<usize>]) -> String {
    let mut out = String::new();
    out.push_str("Confusion matrix (rows = actual, last column = no-decision)\n");
    out.push_str(&format!("{:>8}", ""));
    for d in class_digits {
        out.push_str(&format!("{:>8}", format!("pred {d}")));
    }
    out.push_str(&format!("{:>8}\n", "none"));
    for (i, row) in confusion.iter().enumerate() {
        out.push_str(&format!("{:>8}", format!("digit {}", class_digits[i])));
        for v in row {
            out.push_str(&format!("{v:>8}"));
        }
        out.push('\n');
    }
    out
}

pub fn render_resources(r: &ResourceReport) -> String {
    let mut out = String::new();
    out.push_str("\nResources\n");
    out.push_str(&format!("{:<10} {:>8} {:>10} {:>14}\n", "Cell", "Count", "JJs", "Static power"));
    out.push_str(&format!("{}\n", rule(46)));
    for (kind, t) in &r.per_kind {
        out.push_str(&format!(
            "{:<10} {:>8} {:>10} {:>14}\n",
            kind,
            t.cells,
            t.jj,
            format!("{:.3} uW", t.static_power_w * 1e6)
        ));
    }
    out.push_str(&format!(
        "total: {} JJs, {:.3} mW static (published reference {} JJs / {:.2} mW; delta {:+} JJs)\n",
        r.jj_total,
        r.static_power_w * 1e3,
        r.reference_jj,
        r.reference_static_power_w * 1e3,
        r.jj_delta
    ));
    out
}

pub fn render_timing(t: &TimingReport) -> String {
    let mut out = String::new();
    out.push_str("\nTiming\n");
    out.push_str(&format!(
        "fan-out: depth {} -> {:.1} ps; input stage {:.1} ps; hidden stage {:.1} ps\n",
        t.max_fanout_depth, t.fanout_delay_ps, t.input_stage_ps, t.hidden_stage_ps
    ));
    match t.max_throughput_ghz {
        Some(ghz) => out.push_str(&format!(
            "critical path {:.1} ps ({:?} clock) -> max throughput {:.2} GHz\n",
            t.critical_path_ps, t.clock, ghz
        )),
        None => out.push_str("degenerate zero-delay model: throughput unbounded (check timing parameters)\n"),
    }
    out
}

pub fn render_energy(e: &EnergyReport, mean_switches: f64) -> String {
    let mut out = String::new();
    out.push_str("\nEnergy (sample 0)\n");
    out.push_str(&format!(
        "{} pulse events, {:.0} JJ switchings -> {:.3} fJ (published reference {:.2} fJ per inference)\n",
        e.pulse_events,
        e.jj_switches,
        e.energy_fj,
        e.reference_energy_j * 1e15
    ));
    out.push_str(&format!("mean pulse events over the sweep: {mean_switches:.1}\n"));
    out
}

pub fn render_equivalence(r: &EquivalenceReport) -> String {
    if r.passed() {
        format!(
            "equivalence: {}/{} samples match the software forward pass\n",
            r.total - r.mismatches,
            r.total
        )
    } else {
        let first = r.first_mismatch.as_ref();
        format!(
            "equivalence FAILED: {}/{} mismatches; first at sample {} (label {}): software {:?} vs hardware {:?}\n",
            r.mismatches,
            r.total,
            first.map(|f| f.sample_index).unwrap_or_default(),
            first.map(|f| f.label).unwrap_or_default(),
            first.map(|f| f.software_bits.clone()).unwrap_or_default(),
            first.map(|f| f.hardware_bits.clone()).unwrap_or_default(),
        )
    }
}
