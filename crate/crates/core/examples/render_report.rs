// Renders a sweep table as CSV, JSON and Markdown.

use chunkbench::evaluation::{RowStats, SweepRow, SweepTable};
use chunkbench::metrics::AggregateStats;
use chunkbench::reporting::{emit, round_half_even, ReportFormat, ReportSpec};

fn row(embedder: &str, size: usize, iou: f64, recall: f64) -> SweepRow {
    let s = |mean, std| AggregateStats { mean, std, n: 40 };
    SweepRow {
        dataset: "finance".into(),
        embedder: embedder.into(),
        model: "deepseek-r1".into(),
        chunk_size: size,
        k: 5,
        stats: Some(RowStats {
            iou: s(iou, 0.021),
            recall: s(recall, 0.18),
            precision: s(iou * 1.3, 0.04),
            precision_omega: s(0.29, 0.07),
        }),
        error: None,
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut failed = row("snowflake", 20, 0.0, 0.0);
    failed.stats = None;
    failed.error = Some("embedding provider unreachable".into());
    let table = SweepTable::new(vec![
        row("bge-m3", 5, 0.0630, 0.55),
        row("bge-m3", 10, 0.0575, 0.71),
        row("nomic", 5, 0.0512, 0.62),
        failed,
    ]);

    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
        let spec = ReportSpec { bold_lowest_std: true, ..ReportSpec::new(format) };
        println!("--- {format:?}");
        print!("{}", String::from_utf8(emit(&table, &spec)?)?);
    }
    // rounding is half-even on the exact binary value
    println!("{} {} {}", round_half_even(0.125, 2), round_half_even(0.375, 2), round_half_even(2.675, 2));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
