//! Generate a scenario, write it in the JSONL formats the CLI reads, and
//! read it back.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use seqvad::data::{parse_feature_stream, parse_ground_truth, write_feature_stream, write_ground_truth};
use seqvad::synth::{generate_scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ScenarioConfig::standard(3, 42);
    let scenario = generate_scenario(&config)?;
    let dir = std::env::temp_dir().join("seqvad_synth_example");
    std::fs::create_dir_all(&dir)?;

    let test = dir.join("test.jsonl");
    let truth = dir.join("truth.jsonl");
    write_feature_stream(BufWriter::new(File::create(&test)?), &scenario.test)?;
    write_ground_truth(BufWriter::new(File::create(&truth)?), &scenario.truth)?;

    let frames = parse_feature_stream(BufReader::new(File::open(&test)?))?;
    let events = parse_ground_truth(BufReader::new(File::open(&truth)?))?;
    let objects: usize = frames.iter().map(|f| f.objects.len()).sum();
    println!("{} training frames", scenario.train.len());
    println!("{} test frames, {objects} objects -> {}", frames.len(), test.display());
    for e in &events {
        println!("  {} anomalous {}..={}", e.video_id, e.start_frame, e.end_frame);
    }
    println!("round trip exact: {}", frames == scenario.test && events == scenario.truth);
    Ok(())
}
