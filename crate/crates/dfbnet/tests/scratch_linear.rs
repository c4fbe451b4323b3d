use dfbnet::rng::Rng;
use dfbnet::synth::{ClipManifest, ManifestEntry, PatchBox};
use dfbnet::tensor::Tensor;
use dfbnet::train::{self, TrainConfig};
use dfbnet::vten;

// Trivial task: class c shifts channel 0 by 0.3*c. A linear readout on any
// sane feature map solves this; if training cannot, the loop itself is broken.
#[test]
fn linear_sanity() {
    let dir = std::env::temp_dir().join("dfbnet-linear-sanity");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(dir.join("train")).unwrap();
    let classes = 4usize;
    let per_class = 20usize;
    let mut rng = Rng::new(1);
    let mut entries = Vec::new();
    for c in 0..classes {
        for i in 0..per_class {
            let mut clip: Tensor<f32> = rng.normal_tensor(&[3, 8, 32, 32], 0.0, 1.0).unwrap();
            let shift = 0.3 * c as f32;
            let data: Vec<f32> = clip
                .data()
                .iter()
                .enumerate()
                .map(|(j, &v)| if j < 8 * 32 * 32 { v + shift } else { v })
                .collect();
            clip = Tensor::new(vec![3, 8, 32, 32], data).unwrap();
            let rel = format!("train/c{c}_{i}.vten");
            vten::write(&dir.join(&rel), &clip).unwrap();
            entries.push(ManifestEntry {
                path: rel,
                label: c,
                patch: PatchBox { t0: 0, y0: 0, x0: 0, t: 1, h: 1, w: 1 },
            });
        }
    }
    let manifest = ClipManifest { classes, split: "train".into(), entries, dir: dir.clone() };

    let text = std::fs::read_to_string("/tmp/abl/trend.cfg").unwrap();
    let mut cfg = TrainConfig::from_kv_string(&text, "t").unwrap();
    cfg.classes = classes;
    cfg.epochs = 6;
    cfg.lr_milestones = vec![];
    cfg.lr = std::env::var("SL_LR").map(|v| v.parse().unwrap()).unwrap_or(0.03);
    cfg.dropout = std::env::var("SL_DROP").map(|v| v.parse().unwrap()).unwrap_or(0.5);
    cfg.momentum = std::env::var("SL_MOM").map(|v| v.parse().unwrap()).unwrap_or(0.9);
    let result = train::train::<f32>(&cfg, &manifest, None).unwrap();
    for line in &result.metrics {
        println!("{line}");
    }
    assert!(result.final_train_top1 > 0.9, "linear task stuck at {}", result.final_train_top1);
}
