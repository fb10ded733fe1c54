use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = r#"
extent = [300.0, 240.0]
origin = [600000.0, 5100000.0]
base_density = 8.0
rng_seed = 3
terrain = { kind = "slope", base = 210.0, dzdx = 0.003, dzdy = 0.0 }

[[water_bodies]]
elevation = 207.5
return_fraction = 0.08
shape = { kind = "disk", cx = 110.0, cy = 120.0, radius = 55.0 }

[[buildings]]
footprint = [230.0, 60.0, 260.0, 90.0]
height = 10.0
shadow_direction = [0.0, 1.0]
shadow_length = 8.0

[bands]
water_green = 0.1
water_nir = 0.03
land_green = 0.09
land_nir = 0.3
shadow_dim = 0.3
noise = 0.02
shifts = [{ rect = [0.0, 0.0, 150.0, 240.0], green_offset = 0.05 }]
"#;

fn waterline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_waterline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let spec = dir.join("scene.toml");
    fs::write(&spec, SCENE).unwrap();
    let out = waterline(&["synth", "--spec", s(&spec), "--out-dir", s(&dir.join("scene"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_exits_with_two_and_names_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = waterline(&["map", "/no/such/cloud.las", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
}

#[test]
fn bad_parameters_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let las = dir.path().join("scene/points.las");
    let out = waterline(&["map", s(&las), "--out-dir", s(&dir.path().join("o")), "--window", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params"));
}

#[test]
fn synth_map_eval_ndwi_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let scene = dir.path().join("scene");
    let map = dir.path().join("map");
    let out = waterline(&[
        "map",
        s(&scene.join("points.las")),
        "--out-dir",
        s(&map),
        "--building-mask",
        s(&scene.join("buildings.asc")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "dsm.asc",
        "seeds.asc",
        "water_mask.asc",
        "water_elevation.asc",
        "hydro_flattened_dem.asc",
        "segments.jsonl",
        "manifest.json",
    ] {
        assert!(map.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(map.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"]["window_side"], 9);
    assert_eq!(manifest["config"]["werm"]["min_area"], 500.0);
    assert!(manifest["density"]["threshold_real"].as_f64().unwrap() > 0.0);

    let ndwi = dir.path().join("ndwi");
    let out = waterline(&[
        "ndwi",
        "--green",
        s(&scene.join("green.asc")),
        "--nir",
        s(&scene.join("nir.asc")),
        "--truth",
        s(&scene.join("truth_water.asc")),
        "--out-dir",
        s(&ndwi),
        "--tiles-x",
        "4",
        "--tiles-y",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ndwi.join("ndwi_local_mask.asc").is_file());

    let report = dir.path().join("report");
    let out = waterline(&[
        "eval",
        "--truth",
        s(&scene.join("truth_water.asc")),
        "--pred-a",
        s(&map.join("water_mask.asc")),
        "--pred-b",
        s(&ndwi.join("ndwi_global_mask.asc")),
        "--tiles-x",
        "4",
        "--tiles-y",
        "3",
        "--exclude",
        "0,11",
        "--out",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("iou"), "{table}");
    let tiles = fs::read_to_string(report.join("tiles_a.jsonl")).unwrap();
    assert_eq!(tiles.lines().count(), 12);
    assert!(report.join("divergent_tiles.jsonl").is_file());
}

#[test]
fn replay_and_thread_counts_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let las = dir.path().join("scene/points.las");
    let one = dir.path().join("one");
    let eight = dir.path().join("eight");
    let replay = dir.path().join("replay");
    for (out_dir, threads) in [(&one, "1"), (&eight, "8")] {
        let out = waterline(&["map", s(&las), "--out-dir", s(out_dir), "--threads", threads, "--ms", "300"]);
        assert!(out.status.success());
    }
    let out = waterline(&["map", "--replay", s(&one.join("manifest.json")), "--out-dir", s(&replay)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for entry in fs::read_dir(&one).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(one.join(&name)).unwrap();
        assert!(a == fs::read(eight.join(&name)).unwrap(), "{name:?} differs by thread count");
        assert!(a == fs::read(replay.join(&name)).unwrap(), "{name:?} differs after replay");
    }
}
