//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "support/oracle.rs"]
mod oracle;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use platter_core::dataset::{
    compute_stats, parse_yolo_label_file, read_class_counts, serialize_yolo_label, split_dataset,
};
use platter_core::detect::{parse_detection_file, serialize_detection_file};
use platter_core::eval::{
    average_precision, iou, match_detections, ClassCounts, EvalImage, PredictionOutcome, Prf,
};
use platter_core::format::decode_utf8;
use platter_core::nutrition::{
    compute_bmr, compute_goal, Activity, Band, BandThresholds, BmrFormula, CalorieTable, Diary,
    Dish, MealInput, Sex, Tz, UserProfile,
};
use platter_core::{
    BoundingBox, ClassRegistry, Dataset, DetectionSet, DishCounts, GroundTruthBox, ImageRecord,
    PredictedBox,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    }};
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("dataset statistics", dataset_stats),
        ("AP oracle equivalence", ap_oracle),
        ("perfect detector end to end", perfect_detector),
        ("matching invariants", matching_invariants),
        ("precision/recall/F1 hand cases", prf_hand_cases),
        ("IoU geometry", iou_geometry),
        ("label and detection parsers", parsers),
        ("BMR and goals", bmr),
        ("tracker semantics and replay", tracker),
        ("train/test split", split),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2} s): {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn registry(n: usize) -> ClassRegistry {
    ClassRegistry::new((0..n).map(|i| format!("dish{i}")).collect()).unwrap()
}

/// A box that may stick out of the image; geometry clips it.
fn random_box(r: &mut ChaCha8Rng) -> BoundingBox {
    BoundingBox::new(
        r.random(),
        r.random(),
        r.random_range(0.02..0.6),
        r.random_range(0.02..0.6),
    )
    .unwrap()
}

fn dataset_stats() -> Check {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/dish61_counts.csv");
    let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (reg, table) = read_class_counts(text.as_bytes()).map_err(|e| e.to_string())?;

    // Materialize a real dataset with those counts: one class per image,
    // annotations spread as evenly as possible over the class's images.
    let b = BoundingBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
    let mut images = Vec::new();
    for (c, (&n_img, &n_ann)) in table
        .per_class_image_count
        .iter()
        .zip(&table.per_class_annotation_count)
        .enumerate()
    {
        for i in 0..n_img {
            let k = n_ann / n_img + usize::from(i < n_ann % n_img);
            images.push(ImageRecord::new(
                format!("c{c}_{i}"),
                vec![
                    GroundTruthBox {
                        class_id: c,
                        bbox: b
                    };
                    k
                ],
            ));
        }
    }
    let ds = Dataset::new(reg, images).map_err(|e| e.to_string())?;
    let stats = compute_stats(&ds);
    let secs = start.elapsed().as_secs_f64();

    ensure!(
        stats.per_class_image_count == table.per_class_image_count
            && stats.per_class_annotation_count == table.per_class_annotation_count,
        "materialized dataset does not reproduce the table"
    );
    let near = |v: f64, target: f64| (v.round() - target).abs() <= 1.0;
    ensure!(
        near(stats.images.mean, 1115.0) && near(stats.images.std, 500.0),
        "images per class {:.2} ± {:.2}, expected 1115 ± 500",
        stats.images.mean,
        stats.images.std
    );
    ensure!(
        near(stats.annotations.mean, 2210.0) && near(stats.annotations.std, 1584.0),
        "annotations per class {:.2} ± {:.2}, expected 2210 ± 1584",
        stats.annotations.mean,
        stats.annotations.std
    );
    let rel = (stats.total_annotations as f64 - 134_814.0).abs() / 134_814.0;
    ensure!(
        rel <= 0.01,
        "annotation total {} is {:.2}% off",
        stats.total_annotations,
        rel * 100.0
    );
    ensure!(secs < 1.0, "took {secs:.3} s");
    Ok(format!(
        "images {:.2} ± {:.2}, annotations {:.2} ± {:.2}, total {} ({:.3}% off 134814), {} images in {:.3} s",
        stats.images.mean,
        stats.images.std,
        stats.annotations.mean,
        stats.annotations.std,
        stats.total_annotations,
        rel * 100.0,
        stats.total_images,
        secs
    ))
}

struct Instance {
    classes: usize,
    images: Vec<(Vec<GroundTruthBox>, Vec<PredictedBox>)>,
}

/// At most 10 ground-truth boxes and 20 predictions spread over 1 to 3
/// images. Predictions are mostly perturbed ground truth; confidences often
/// sit on a coarse grid so ties are common.
fn random_instance(r: &mut ChaCha8Rng, max_gt: usize, max_pred: usize) -> Instance {
    let classes = r.random_range(1..=5);
    let n_img = r.random_range(1..=3);
    let mut images: Vec<(Vec<GroundTruthBox>, Vec<PredictedBox>)> = vec![(vec![], vec![]); n_img];
    for _ in 0..r.random_range(0..=max_gt) {
        let i = r.random_range(0..n_img);
        images[i].0.push(GroundTruthBox {
            class_id: r.random_range(0..classes),
            bbox: random_box(r),
        });
    }
    for _ in 0..r.random_range(0..=max_pred) {
        let i = r.random_range(0..n_img);
        let confidence = if r.random_bool(0.5) {
            f64::from(r.random_range(1..=10u32)) / 10.0
        } else {
            r.random()
        };
        let gts = &images[i].0;
        let (class_id, bbox) = if !gts.is_empty() && r.random_bool(0.7) {
            let g = gts[r.random_range(0..gts.len())];
            let s = 0.08;
            let b = g.bbox;
            let class_id = if r.random_bool(0.15) {
                r.random_range(0..classes)
            } else {
                g.class_id
            };
            let bbox = BoundingBox::new(
                (b.cx + r.random_range(-s..s)).clamp(0.0, 1.0),
                (b.cy + r.random_range(-s..s)).clamp(0.0, 1.0),
                (b.w * r.random_range(0.7..1.3)).min(1.0),
                (b.h * r.random_range(0.7..1.3)).min(1.0),
            )
            .unwrap();
            (class_id, bbox)
        } else {
            (r.random_range(0..classes), random_box(r))
        };
        images[i].1.push(PredictedBox {
            class_id,
            confidence,
            bbox,
        });
    }
    Instance { classes, images }
}

fn to_oracle(inst: &Instance) -> Vec<(Vec<oracle::Gt>, Vec<oracle::Pred>)> {
    inst.images
        .iter()
        .map(|(g, p)| {
            (
                g.iter()
                    .map(|g| (g.class_id, g.bbox.cx, g.bbox.cy, g.bbox.w, g.bbox.h))
                    .collect(),
                p.iter()
                    .map(|p| {
                        (
                            p.class_id,
                            p.confidence,
                            p.bbox.cx,
                            p.bbox.cy,
                            p.bbox.w,
                            p.bbox.h,
                        )
                    })
                    .collect(),
            )
        })
        .collect()
}

fn views(inst: &Instance) -> Vec<EvalImage<'_>> {
    inst.images
        .iter()
        .map(|(g, p)| EvalImage { gt: g, preds: p })
        .collect()
}

fn ap_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut compared, mut undefined, mut worst) = (0, 0, 0.0f64);
    let instances = 2000;
    for n in 0..instances {
        let inst = random_instance(&mut r, 10, 20);
        let brute = to_oracle(&inst);
        let v = views(&inst);
        for c in 0..inst.classes {
            for iou_t in [0.5, 0.3] {
                let got = average_precision(&v, inst.classes, c, iou_t);
                let want = oracle::average_precision(&brute, c, iou_t);
                match (got, want) {
                    (None, None) => undefined += 1,
                    (Some(a), Some(b)) => {
                        let d = (a - b).abs();
                        worst = worst.max(d);
                        ensure!(
                            d <= 1e-9,
                            "instance {n}, class {c}, IoU {iou_t}: AP {a} vs oracle {b}"
                        );
                        compared += 1;
                    }
                    _ => {
                        return Err(format!(
                            "instance {n}, class {c}: AP {got:?} vs oracle {want:?}"
                        ))
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "{instances} instances, {compared} APs agree (max |Δ| {worst:.1e}), {undefined} undefined on both sides"
    ))
}

fn platter(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_platter"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "platter {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn perfect_detector() -> Check {
    let mut r = rng(3);
    let datasets = 5;
    let mut boxes = 0;
    for d in 0..datasets {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let classes = r.random_range(1..=8);
        let names: String = (0..classes).map(|i| format!("dish {i}\n")).collect();
        fs::write(dir.path().join("classes.txt"), names).unwrap();
        let labels = dir.path().join("labels");
        fs::create_dir_all(&labels).unwrap();
        for i in 0..r.random_range(1..60) {
            let record = ImageRecord::new(
                format!("im{i}"),
                // The first image always has a box so some class is evaluable.
                (0..r.random_range(usize::from(i == 0)..6))
                    .map(|_| GroundTruthBox {
                        class_id: r.random_range(0..classes),
                        bbox: random_box(&mut r),
                    })
                    .collect(),
            );
            boxes += record.boxes.len();
            fs::write(
                labels.join(format!("im{i}.txt")),
                serialize_yolo_label(&record),
            )
            .unwrap();
        }
        let base = ["--classes", "classes.txt", "--labels", "labels"];
        let cwd = dir.path();
        platter(
            &[
                &["stub-detect"],
                &base[..],
                &["--out", "det", "--seed", &d.to_string()],
            ]
            .concat(),
            cwd,
        )?;
        let table = platter(
            &[&["eval-det"], &base[..], &["--detections", "det"]].concat(),
            cwd,
        )?;
        let last = table.lines().last().unwrap_or_default();
        ensure!(
            last == "all,100.00,100.00,100.00,100.00",
            "dataset {d}: summary row {last:?}"
        );
        let json = platter(
            &[&["eval-det"], &base[..], &["--detections", "det", "--json"]].concat(),
            cwd,
        )?;
        let v: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
        for key in ["map", "macro_precision", "macro_recall", "macro_f1"] {
            ensure!(
                v["summary"][key] == 1.0,
                "dataset {d}: {key} = {}",
                v["summary"][key]
            );
        }
        for c in v["classes"].as_array().unwrap() {
            if c["ground_truths"].as_u64() > Some(0) {
                for key in ["precision", "recall", "f1", "ap"] {
                    ensure!(
                        c[key] == 1.0,
                        "dataset {d}, class {}: {key} = {}",
                        c["name"],
                        c[key]
                    );
                }
            }
        }
    }
    Ok(format!(
        "{datasets} generated datasets ({boxes} boxes) score exactly 100.00 via the CLI"
    ))
}

fn totals(o: &platter_core::eval::MatchOutcome, c: usize) -> ClassCounts {
    o.per_class[c]
}

fn matching_invariants() -> Check {
    let mut r = rng(4);
    let cases = 3000;
    for n in 0..cases {
        let inst = random_instance(&mut r, 10, 20);
        let (gt, preds) = &inst.images[0];
        let (a, b) = (r.random_range(0.05..0.95), r.random_range(0.05..0.95));
        let (lo_iou, hi_iou) = (f64::min(a, b), f64::max(a, b));
        let (a, b) = (r.random::<f64>(), r.random::<f64>());
        let (lo_conf, hi_conf) = (f64::min(a, b), f64::max(a, b));
        let k = inst.classes;
        let base = match_detections(gt, preds, k, lo_iou, lo_conf);
        let stricter_iou = match_detections(gt, preds, k, hi_iou, lo_conf);
        let stricter_conf = match_detections(gt, preds, k, lo_iou, hi_conf);
        for c in 0..k {
            let t = totals(&base, c);
            let gts = gt.iter().filter(|g| g.class_id == c).count();
            let kept = preds
                .iter()
                .filter(|p| p.class_id == c && p.confidence >= lo_conf)
                .count();
            ensure!(
                t.tp + t.fn_ == gts,
                "case {n} class {c}: TP+FN {} != |GT| {gts}",
                t.tp + t.fn_
            );
            ensure!(
                t.tp + t.fp == kept,
                "case {n} class {c}: TP+FP {} != kept {kept}",
                t.tp + t.fp
            );
            ensure!(
                totals(&stricter_iou, c).tp <= t.tp,
                "case {n} class {c}: TP grew with IoU threshold"
            );
            ensure!(
                totals(&stricter_conf, c).tp <= t.tp,
                "case {n} class {c}: TP grew with confidence threshold"
            );
        }
    }

    // A second hit on an already matched ground truth is a false positive,
    // even when it overlaps better.
    let g = BoundingBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
    let near = BoundingBox::new(0.51, 0.5, 0.2, 0.2).unwrap();
    let gt = [GroundTruthBox {
        class_id: 0,
        bbox: g,
    }];
    let preds = [
        PredictedBox {
            class_id: 0,
            confidence: 0.9,
            bbox: near,
        },
        PredictedBox {
            class_id: 0,
            confidence: 0.8,
            bbox: g,
        },
        PredictedBox {
            class_id: 0,
            confidence: 0.9,
            bbox: g,
        },
    ];
    let o = match_detections(&gt, &preds, 1, 0.5, 0.5);
    ensure!(
        o.per_class[0]
            == ClassCounts {
                tp: 1,
                fp: 2,
                fn_: 0
            },
        "duplicate case counts {:?}",
        o.per_class[0]
    );
    ensure!(
        matches!(
            o.predictions[0],
            PredictionOutcome::TruePositive { gt: 0, .. }
        ) && o.predictions[1] == PredictionOutcome::FalsePositive
            && o.predictions[2] == PredictionOutcome::FalsePositive,
        "duplicate case outcomes {:?}",
        o.predictions
    );
    // A different-class prediction never consumes a ground truth.
    let preds = [
        PredictedBox {
            class_id: 1,
            confidence: 0.99,
            bbox: g,
        },
        PredictedBox {
            class_id: 0,
            confidence: 0.6,
            bbox: g,
        },
    ];
    let o = match_detections(&gt, &preds, 2, 0.5, 0.5);
    ensure!(
        o.per_class[0].tp == 1 && o.per_class[1].fp == 1,
        "class-aware case {:?}",
        o.per_class
    );
    Ok(format!("{cases} random cases hold count partitions and threshold monotonicity; duplicate-hit cases correct"))
}

fn prf_hand_cases() -> Check {
    let m = Prf::from_counts(&ClassCounts {
        tp: 3,
        fp: 1,
        fn_: 2,
    });
    ensure!(
        (m.precision - 0.75).abs() <= 1e-4
            && (m.recall - 0.6).abs() <= 1e-4
            && (m.f1 - 0.6667).abs() <= 1e-4,
        "(3,1,2) gave {m:?}"
    );
    let z = Prf::from_counts(&ClassCounts::default());
    ensure!(
        z.precision == 0.0 && z.recall == 0.0 && z.f1 == 0.0,
        "0/0 gave {z:?}"
    );
    let only_fp = Prf::from_counts(&ClassCounts {
        tp: 0,
        fp: 4,
        fn_: 0,
    });
    ensure!(
        only_fp.recall == 0.0 && only_fp.f1 == 0.0,
        "(0,4,0) gave {only_fp:?}"
    );
    Ok(format!(
        "(3,1,2) -> P {:.4}, R {:.4}, F1 {:.4}; zero denominators -> 0",
        m.precision, m.recall, m.f1
    ))
}

fn iou_geometry() -> Check {
    let a = BoundingBox::from_corners(0.1, 0.1, 0.3, 0.3).unwrap();
    let b = BoundingBox::from_corners(0.2, 0.2, 0.4, 0.4).unwrap();
    let v = iou(&a, &b);
    ensure!((v - 1.0 / 7.0).abs() <= 1e-9, "hand case gave {v}");
    let mut r = rng(6);
    let pairs = 10_000;
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (p, q) = (random_box(&mut r), random_box(&mut r));
        let (pq, qp) = (iou(&p, &q), iou(&q, &p));
        ensure!(pq == qp, "asymmetric: {p:?} {q:?} -> {pq} vs {qp}");
        ensure!((0.0..=1.0).contains(&pq), "out of range: {pq}");
        let self_iou = iou(&p, &p);
        ensure!(
            (self_iou - 1.0).abs() <= 1e-12,
            "identity gave {self_iou} for {p:?}"
        );
        let o = oracle::iou((p.cx, p.cy, p.w, p.h), (q.cx, q.cy, q.w, q.h));
        worst = worst.max((o - pq).abs());
    }
    ensure!(worst <= 1e-12, "disagrees with reference by {worst:e}");
    Ok(format!(
        "hand case {v:.9}; {pairs} random pairs symmetric, self-IoU 1, match reference"
    ))
}

fn random_record(r: &mut ChaCha8Rng, classes: usize, id: &str) -> ImageRecord {
    let boxes = (0..r.random_range(0..12))
        .map(|_| GroundTruthBox {
            class_id: r.random_range(0..classes),
            bbox: BoundingBox::new(
                r.random(),
                r.random(),
                1.0 - r.random::<f64>(),
                1.0 - r.random::<f64>(),
            )
            .unwrap(),
        })
        .collect();
    ImageRecord::new(id, boxes)
}

/// Malformed files with the line that must be reported.
const BAD_LABELS: &[(&str, usize)] = &[
    ("0 0.5 0.5 0.1 0.1\n7 0.5 0.5 0.1 0.1\n", 2),
    ("-1 0.5 0.5 0.1 0.1\n", 1),
    ("a 0.5 0.5 0.1 0.1\n", 1),
    ("0 0.5 0.5 0.1\n", 1),
    ("0 0.5 0.5 0.1 0.1 0.1\n", 1),
    ("0 0.5 0.5 0.1 0.1\n\n0 1.5 0.5 0.1 0.1\n", 3),
    ("0 0.5 0.5 0 0.1\n", 1),
    ("0 0.5 0.5 0.1 1.01\n", 1),
    ("0 0.5 0.5 0.1 0.1\r\n0 nan 0.5 0.1 0.1\r\n", 2),
    ("0 0.5 0.5 0.1 inf\n", 1),
    ("1.0 0.5 0.5 0.1 0.1\n", 1),
];
const BAD_DETECTIONS: &[(&str, usize)] = &[
    ("0 0.9 0.5 0.5 0.1 0.1\n0 1.2 0.5 0.5 0.1 0.1\n", 2),
    ("0 -0.1 0.5 0.5 0.1 0.1\n", 1),
    ("5 0.9 0.5 0.5 0.1 0.1\n", 1),
    ("0 0.9 0.5 0.5 0.1\n", 1),
    ("0 0.5 0.5 0.1 0.1\n", 1),
    ("\n\n0 0.9 0.5 -0.5 0.1 0.1\n", 3),
    ("0 x 0.5 0.5 0.1 0.1\n", 1),
];

fn parsers() -> Check {
    let classes = 7;
    let reg = registry(classes);
    let mut r = rng(7);
    let records = 10_000;
    for i in 0..records {
        let rec = random_record(&mut r, classes, &format!("r{i}"));
        let text = serialize_yolo_label(&rec);
        let back = parse_yolo_label_file(&rec.image_id, &text, &reg)
            .map_err(|e| format!("record {i}: {e}"))?;
        ensure!(back == rec, "label record {i} changed in a round trip");
        ensure!(
            serialize_yolo_label(&back) == text,
            "label record {i} not byte-stable"
        );

        let set = DetectionSet::new(
            format!("d{i}"),
            rec.boxes
                .iter()
                .map(|b| PredictedBox {
                    class_id: b.class_id,
                    confidence: r.random(),
                    bbox: b.bbox,
                })
                .collect(),
        );
        let text = serialize_detection_file(&set);
        let back = parse_detection_file(&set.image_id, &text, &reg)
            .map_err(|e| format!("detections {i}: {e}"))?;
        ensure!(back == set, "detection set {i} changed in a round trip");
        let crlf = text.replace('\n', "\r\n");
        ensure!(
            parse_detection_file(&set.image_id, &crlf, &reg).ok() == Some(set),
            "detection set {i} differs with CRLF endings"
        );
    }

    let reg5 = registry(5);
    for &(text, line) in BAD_LABELS {
        match parse_yolo_label_file("bad", text, &reg5) {
            Err(e) => ensure!(
                e.line == line,
                "{text:?}: reported line {}, expected {line}",
                e.line
            ),
            Ok(_) => return Err(format!("accepted malformed label file {text:?}")),
        }
    }
    for &(text, line) in BAD_DETECTIONS {
        match parse_detection_file("bad", text, &reg5) {
            Err(e) => ensure!(
                e.line == line,
                "{text:?}: reported line {}, expected {line}",
                e.line
            ),
            Ok(_) => return Err(format!("accepted malformed detection file {text:?}")),
        }
    }

    // Byte fuzz: random bytes and random tokens from the format's alphabet.
    let alphabet: &[&[u8]] = &[
        b"0",
        b"1",
        b"4",
        b"9",
        b".",
        b"-",
        b"+",
        b"e",
        b" ",
        b"\t",
        b"\n",
        b"\r\n",
        b"0.5",
        b"1e-3",
        b"NaN",
        b"inf",
        b"\xff",
        b"\xc3\xa9",
        b"999999999999999999999",
    ];
    let fuzz = 100_000;
    let mut rejected = 0;
    for _ in 0..fuzz {
        let mut bytes = Vec::new();
        if r.random_bool(0.3) {
            bytes.extend((0..r.random_range(0..48)).map(|_| r.random::<u8>()));
        } else {
            for _ in 0..r.random_range(0..24) {
                bytes.extend_from_slice(alphabet[r.random_range(0..alphabet.len())]);
            }
        }
        let lines = bytes.iter().filter(|&&b| b == b'\n').count() + 1;
        let outcome = panic::catch_unwind(|| match decode_utf8(&bytes) {
            Ok(text) => [
                parse_yolo_label_file("f", text, &reg5).err(),
                parse_detection_file("f", text, &reg5).err(),
            ],
            Err(e) => [Some(e), None],
        });
        let errors = outcome.map_err(|_| format!("parser panicked on {bytes:?}"))?;
        for e in errors.into_iter().flatten() {
            ensure!(
                (1..=lines).contains(&e.line),
                "line {} out of range for {bytes:?}",
                e.line
            );
            rejected += 1;
        }
    }
    Ok(format!(
        "{records} label and {records} detection round trips; {} malformed fixtures rejected at the right line; \
         {fuzz} fuzz inputs without a panic ({rejected} rejections)",
        BAD_LABELS.len() + BAD_DETECTIONS.len()
    ))
}

fn profile(sex: Sex, weight_kg: f64, height_cm: f64, age: u32, activity: Activity) -> UserProfile {
    UserProfile {
        age,
        sex,
        height_cm,
        weight_kg,
        activity,
        timezone: Tz::UTC,
        formula: BmrFormula::Mifflin1990,
    }
}

fn bmr() -> Check {
    let p = profile(Sex::Male, 70.0, 175.0, 30, Activity::Moderate);
    let roza = compute_bmr(&p, BmrFormula::Roza1984).map_err(|e| e.to_string())?;
    let mifflin = compute_bmr(&p, BmrFormula::Mifflin1990).map_err(|e| e.to_string())?;
    ensure!((roza - 1695.667).abs() <= 0.01, "roza1984 gave {roza}");
    ensure!(
        (mifflin - 1648.75).abs() <= 0.01,
        "mifflin1990 gave {mifflin}"
    );
    for f in BmrFormula::ALL {
        for a in Activity::ALL {
            let g = compute_goal(&profile(Sex::Female, 62.0, 160.0, 45, a), f)
                .map_err(|e| e.to_string())?;
            ensure!(
                g.goal == g.bmr * a.multiplier() && g.multiplier == a.multiplier(),
                "{f:?} {a:?}: {g:?}"
            );
        }
    }
    let mut r = rng(8);
    let profiles = 1000;
    for _ in 0..profiles {
        let sex = if r.random_bool(0.5) {
            Sex::Male
        } else {
            Sex::Female
        };
        let (w, h, a) = (
            r.random_range(30.0..200.0),
            r.random_range(120.0..220.0),
            r.random_range(15..90),
        );
        let base = profile(sex, w, h, a, Activity::Light);
        let heavier = profile(sex, w + r.random_range(0.1..30.0), h, a, Activity::Light);
        let taller = profile(sex, w, h + r.random_range(0.1..30.0), a, Activity::Light);
        let older = profile(sex, w, h, a + r.random_range(1..30), Activity::Light);
        for f in BmrFormula::ALL {
            let bmr = |p: &UserProfile| compute_bmr(p, f).unwrap();
            let b = bmr(&base);
            ensure!(
                bmr(&heavier) > b,
                "{f:?}: not increasing in weight at {base:?}"
            );
            ensure!(
                bmr(&taller) > b,
                "{f:?}: not increasing in height at {base:?}"
            );
            ensure!(bmr(&older) < b, "{f:?}: not decreasing in age at {base:?}");
        }
    }
    Ok(format!(
        "roza1984 {roza:.3}, mifflin1990 {mifflin:.2}; goal = BMR × multiplier exactly; monotone over {profiles} profiles"
    ))
}

fn table() -> CalorieTable {
    CalorieTable::new((0..4).map(|c| Dish {
        class_id: c,
        name: format!("dish{c}"),
        // Values with inexact binary sums, so order matters unless handled.
        kcal: [0.1, 0.2, 0.3, 333.3][c],
    }))
    .unwrap()
}

fn tracker() -> Check {
    let tz: Tz = "America/New_York".parse().unwrap();
    let local = |y, m, d, h, mi| {
        tz.with_ymd_and_hms(y, m, d, h, mi, 0)
            .unwrap()
            .with_timezone(&Utc)
    };
    let goal_of_2000 = |d: &mut Diary, id: &str| {
        d.create_user(
            id,
            &UserProfile {
                timezone: tz,
                ..profile(Sex::Male, 70.0, 175.0, 30, Activity::Moderate)
            },
        )
        .unwrap();
        let goal = platter_core::nutrition::CalorieGoal {
            bmr: 2000.0,
            multiplier: 1.0,
            goal: 2000.0,
            formula: BmrFormula::Mifflin1990,
        };
        d.apply(platter_core::nutrition::DiaryEvent::GoalSet {
            user_id: id.into(),
            goal,
        })
        .unwrap();
    };

    // 23:59 and 00:01 local land on different dates, even though both are the same UTC date.
    let mut d = Diary::default();
    goal_of_2000(&mut d, "u");
    let meal = |c: usize, n: u32| MealInput::Counts(DishCounts::from([(c, n)]));
    d.log_meal("u", &meal(3, 1), &table(), local(2024, 11, 4, 23, 59))
        .unwrap();
    d.log_meal("u", &meal(3, 2), &table(), local(2024, 11, 5, 0, 1))
        .unwrap();
    let day1 = d.tracker_state("u", local(2024, 11, 4, 12, 0)).unwrap();
    let day2 = d.tracker_state("u", local(2024, 11, 5, 12, 0)).unwrap();
    ensure!(
        day1.consumed == 333.3 && day2.consumed == 666.6 && day1.date != day2.date,
        "midnight split gave {day1:?} / {day2:?}"
    );

    // Same-day log order does not change the total, bit for bit.
    let mut r = rng(9);
    let meals: Vec<(usize, u32, DateTime<Utc>)> = (0..10)
        .map(|i| {
            (
                r.random_range(0..4),
                r.random_range(1..5),
                local(2024, 6, 1, 7 + i, 0),
            )
        })
        .collect();
    let mut totals = BTreeSet::new();
    for _ in 0..50 {
        let mut order: Vec<usize> = (0..meals.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let mut d = Diary::default();
        goal_of_2000(&mut d, "u");
        for i in order {
            let (c, n, at) = meals[i];
            d.log_meal("u", &meal(c, n), &table(), at).unwrap();
        }
        totals.insert(
            d.tracker_state("u", local(2024, 6, 1, 22, 0))
                .unwrap()
                .consumed
                .to_bits(),
        );
    }
    ensure!(
        totals.len() == 1,
        "{} distinct totals across orderings",
        totals.len()
    );

    // Band edges are closed below.
    let bands = BandThresholds::default();
    for (f, want) in [
        (0.0, Band::Green),
        (0.5 - 1e-12, Band::Green),
        (0.5, Band::Yellow),
        (0.75 - 1e-12, Band::Yellow),
        (0.75, Band::Orange),
        (1.0 - 1e-12, Band::Orange),
        (1.0, Band::Red),
        (1.05, Band::Red),
    ] {
        ensure!(
            bands.band(f) == want,
            "band({f}) = {:?}, expected {want:?}",
            bands.band(f)
        );
    }
    let grid: Vec<Band> = (0..=300)
        .map(|i| bands.band(f64::from(i) / 200.0))
        .collect();
    ensure!(
        grid.windows(2).all(|w| w[0] <= w[1]),
        "band is not monotone"
    );

    let (replayed, days) = service_replay()?;
    Ok(format!(
        "23:59/00:01 local on different dates; order-invariant over 50 permutations; band edges 0.5/0.75/1.0 exact; \
         service restart reproduced {days} history days and {replayed} events"
    ))
}

/// Writes through the HTTP API, restarts on the same data directory and
/// compares history and tracker responses.
fn service_replay() -> Result<(u64, usize), String> {
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use platter_service::{router, AppState, Catalog, Store};
    use tower::ServiceExt;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let build = || {
        let store = Store::open(dir.path(), BandThresholds::default(), 3).unwrap();
        let catalog = Catalog {
            registry: registry(4),
            table: table(),
            confidence_threshold: 0.5,
        };
        let state = AppState::new(store, catalog, 1);
        (router(state.clone()), state)
    };
    let call = |app: axum::Router,
                method: &'static str,
                uri: String,
                body: Option<serde_json::Value>| async move {
        let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
        let resp = app
            .oneshot(
                Request::builder()
                    .method(method)
                    .uri(uri)
                    .body(body)
                    .unwrap(),
            )
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (
            status,
            serde_json::from_slice::<serde_json::Value>(&bytes).unwrap_or_default(),
        )
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let (app, state) = build();
        let profile = serde_json::json!({"age": 28, "sex": "female", "height_cm": 162, "weight_kg": 58,
            "activity": "active", "timezone": "Asia/Kolkata", "formula": "harris1918"});
        let (_, user) = call(app.clone(), "POST", "/users".into(), Some(profile)).await;
        let id = user["user_id"].as_str().ok_or("user not created")?.to_owned();
        call(app.clone(), "PUT", format!("/users/{id}/goal"), None).await;
        let mut r = rng(10);
        for i in 0..12 {
            let body = if i % 3 == 0 {
                serde_json::json!({"detections": "3 0.9 0.5 0.5 0.2 0.2\n3 0.4 0.2 0.2 0.1 0.1\n1 0.7 0.3 0.3 0.1 0.1\n",
                    "file_id": format!("plate{i}"), "timestamp": format!("2024-07-{:02}T{:02}:30:00+05:30", 1 + i / 3, 8 + i)})
            } else {
                serde_json::json!({"counts": {r.random_range(0..4usize).to_string(): r.random_range(1..4)},
                    "timestamp": format!("2024-07-{:02}T{:02}:10:00+05:30", 1 + i / 3, 8 + i)})
            };
            let (s, v) = call(app.clone(), "POST", format!("/users/{id}/meals"), Some(body)).await;
            if !s.is_success() {
                return Err(format!("meal {i} rejected: {v}"));
            }
        }
        let hist = format!("/users/{id}/history?from=2024-06-30&to=2024-07-06");
        let track = format!("/users/{id}/tracker?at=2024-07-02T21:00:00%2B05:30");
        let (_, before) = call(app.clone(), "GET", hist.clone(), None).await;
        let (_, tracker_before) = call(app.clone(), "GET", track.clone(), None).await;
        let seq = state.store().seq();
        drop((app, state));

        let (app, state) = build();
        let (_, after) = call(app.clone(), "GET", hist, None).await;
        let (_, tracker_after) = call(app, "GET", track, None).await;
        let days = before["days"].as_array().map_or(0, Vec::len);
        if days != 7 || before != after || tracker_before != tracker_after || state.store().seq() != seq {
            return Err(format!("history differs after restart:\n{before}\n{after}"));
        }
        let first = NaiveDate::from_ymd_opt(2024, 7, 1).unwrap().to_string();
        if before["days"][1]["date"] != first.as_str() {
            return Err("history does not start on the requested date".into());
        }
        Ok((seq, days))
    })
}

fn split() -> Check {
    let mut r = rng(11);
    let datasets = 100;
    for n in 0..datasets {
        let size = r.random_range(1..400);
        let images = (0..size)
            .map(|i| random_record(&mut r, 3, &format!("x{i}")))
            .collect();
        let ds = Dataset::new(registry(3), images).unwrap();
        let seed = r.random();
        let (train, test) = split_dataset(&ds, 0.9, seed).map_err(|e| e.to_string())?;
        let want = (0.9 * size as f64).round() as usize;
        ensure!(
            train.images().len() == want && test.images().len() == size - want,
            "dataset {n}: {} + {} for {size} images, expected train {want}",
            train.images().len(),
            test.images().len()
        );
        let ids = |d: &Dataset| {
            d.images()
                .iter()
                .map(|i| i.image_id.clone())
                .collect::<BTreeSet<_>>()
        };
        let (a, b) = (ids(&train), ids(&test));
        ensure!(a.is_disjoint(&b), "dataset {n}: parts overlap");
        ensure!(
            a.union(&b).cloned().collect::<BTreeSet<_>>() == ids(&ds),
            "dataset {n}: parts not exhaustive"
        );
        let (again, _) = split_dataset(&ds, 0.9, seed).map_err(|e| e.to_string())?;
        ensure!(
            again == train,
            "dataset {n}: same seed gave a different split"
        );
        let pos = ds.index();
        ensure!(
            train
                .images()
                .windows(2)
                .all(|w| pos[w[0].image_id.as_str()] < pos[w[1].image_id.as_str()]),
            "dataset {n}: train order not preserved"
        );
    }
    Ok(format!(
        "{datasets} random datasets: sizes round(0.9 n), disjoint, exhaustive, seed-deterministic"
    ))
}
