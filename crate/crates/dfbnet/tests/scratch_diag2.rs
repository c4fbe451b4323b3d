use dfbnet::backbone;
use dfbnet::model::{self};
use dfbnet::synth;
use dfbnet::tape::Tape;
use dfbnet::train::TrainConfig;

#[test]
fn cell_norms() {
    let cfg = TrainConfig::from_kv_string(&std::fs::read_to_string("/tmp/abl/r5_df.cfg").unwrap(), "c").unwrap();
    let mcfg = cfg.model_config();
    let manifest = synth::read_manifest(std::path::Path::new("/tmp/abl/data5/train.manifest")).unwrap();
    let params = model::init_params::<f32>(&mcfg, 0).unwrap();

    for idx in [0usize, 1, 2] {
        let entry = &manifest.entries[idx];
        let clip = synth::load_clip::<f32>(&manifest, entry).unwrap();
        let mut tape = Tape::new();
        let ids = model::leaf_params(&mut tape, &params);
        let input = tape.leaf(clip.clone());
        let feats = backbone::forward(&mut tape, input, &ids, &mcfg.backbone).unwrap();
        let s4 = tape.value(feats.stage4);
        let [c, t, h, w] = s4.shape() else { panic!() };
        println!("--- clip {idx}: patch t0={} y0={} x0={} (stage4 {c}x{t}x{h}x{w}, stride 8)", entry.patch.t0, entry.patch.y0, entry.patch.x0);
        // norm over channels per (t, y, x) cell, print the spatial grid summed over t
        for y in 0..*h {
            let mut row = String::new();
            for x in 0..*w {
                let mut norm = 0.0f64;
                for ci in 0..*c {
                    for ti in 0..*t {
                        let v = s4.get(&[ci, ti, y, x]) as f64;
                        norm += v * v;
                    }
                }
                row.push_str(&format!("{:7.2}", norm.sqrt()));
            }
            println!("  {row}");
        }
        // input-level check: mean over the patch box vs overall
        let (ph, pw) = (entry.patch.y0 / 8, entry.patch.x0 / 8);
        println!("  patch cell approx ({ph},{pw})");
    }
}
