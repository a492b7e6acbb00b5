//! Trace, metrics and plot-data writers.

use std::io::Write;

use crate::error::Result;
use crate::sim::{RunMetrics, TraceRecord};

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &[TraceRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(TraceRecord::HEADER)?;
    let mut row: Vec<String> = Vec::with_capacity(TraceRecord::HEADER.len());
    for r in trace {
        row.clear();
        for (name, value) in r.numeric() {
            if name == "decel_desired" {
                row.push(r.mode.as_str().to_string());
            }
            row.push(fmt_float(value));
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

fn toml_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        fmt_float(x)
    }
}

/// `key = value` lines; the result parses as TOML.
pub fn metrics_text(m: &RunMetrics) -> String {
    let fmt_float = toml_float;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    line("controller", format!("\"{}\"", m.controller));
    line("collision", m.collision.to_string());
    line("min_gap", fmt_float(m.min_gap));
    line("final_gap", fmt_float(m.final_gap));
    line("final_v_ego", fmt_float(m.final_v_ego));
    line(
        "stop_time_ego",
        m.stop_time_ego.map_or_else(|| "\"never\"".to_string(), fmt_float),
    );
    line("emergency_count", m.emergency_intervals.len().to_string());
    let (start, end) = m.first_interval().map_or((f64::NAN, f64::NAN), |iv| iv);
    line("first_emergency_start", fmt_float(start));
    line("first_emergency_end", fmt_float(end));
    line("slip_rel_error_mean_f", fmt_float(m.slip_rel_error_mean_f));
    line("slip_rel_error_mean_r", fmt_float(m.slip_rel_error_mean_r));
    line("slip_rel_error_mean", fmt_float(m.slip_rel_error_mean()));
    line("max_decel_emergency", fmt_float(m.max_decel_emergency));
    line("duration", fmt_float(m.duration));
    let intervals: Vec<String> = m
        .emergency_intervals
        .iter()
        .map(|(a, b)| format!("[{}, {}]", fmt_float(*a), fmt_float(*b)))
        .collect();
    line("emergency_intervals", format!("[{}]", intervals.join(", ")));
    out
}

pub fn write_metrics<W: Write>(mut writer: W, m: &RunMetrics) -> Result<()> {
    writer.write_all(metrics_text(m).as_bytes())?;
    Ok(())
}

/// Long-format plot data `(t, series, value)`; series names are prefixed with the run label.
pub fn write_plot_csv<W: Write>(writer: W, runs: &[(&str, &[TraceRecord])]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["t", "series", "value"])?;
    for (label, trace) in runs {
        for r in trace.iter() {
            let t = fmt_float(r.t);
            for (name, value) in r.numeric().into_iter().skip(1) {
                csv.write_record([t.as_str(), &format!("{label}.{name}"), &fmt_float(value)])?;
            }
            let mode_code = match r.mode {
                crate::supervisor::ControllerMode::WheelSlipControl => 1.0,
                crate::supervisor::ControllerMode::SpeedRegulation => 0.0,
                crate::supervisor::ControllerMode::Standstill => -1.0,
            };
            csv.write_record([t.as_str(), &format!("{label}.mode"), &fmt_float(mode_code)])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Side-by-side metrics table for several runs.
pub fn comparison_table(runs: &[&RunMetrics]) -> String {
    let fmt_opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    type Row<'a> = (&'a str, Box<dyn Fn(&RunMetrics) -> String>);
    let rows: Vec<Row> = vec![
        ("collision", Box::new(|m| m.collision.to_string())),
        ("min_gap [m]", Box::new(|m| format!("{:.4}", m.min_gap))),
        ("final_gap [m]", Box::new(|m| format!("{:.4}", m.final_gap))),
        ("stop_time_ego [s]", Box::new(move |m| fmt_opt(m.stop_time_ego))),
        ("first_emergency_start [s]", Box::new(move |m| fmt_opt(m.first_interval().map(|i| i.0)))),
        ("first_emergency_end [s]", Box::new(move |m| fmt_opt(m.first_interval().map(|i| i.1)))),
        ("emergency_count", Box::new(|m| m.emergency_intervals.len().to_string())),
        ("slip_rel_error_f [%]", Box::new(|m| format!("{:.3}", 100.0 * m.slip_rel_error_mean_f))),
        ("slip_rel_error_r [%]", Box::new(|m| format!("{:.3}", 100.0 * m.slip_rel_error_mean_r))),
        ("slip_rel_error [%]", Box::new(|m| format!("{:.3}", 100.0 * m.slip_rel_error_mean()))),
        ("max_decel_emergency [m/s2]", Box::new(|m| format!("{:.4}", m.max_decel_emergency))),
    ];
    let mut out = format!("{:<28}", "metric");
    for m in runs {
        out.push_str(&format!("{:>14}", m.controller.as_str()));
    }
    out.push('\n');
    for (name, f) in rows {
        out.push_str(&format!("{name:<28}"));
        for m in runs {
            out.push_str(&format!("{:>14}", f(m)));
        }
        out.push('\n');
    }
    out
}
