use sketchedit::checkpoint::Checkpoint;
use sketchedit::config::Config;
use sketchedit::forge::{forge_samples, read_annotations, Source};
use sketchedit::shard::{decode_shard, encode_shard, read_shard, write_shard};
use sketchedit::AppError;
use sketchedit_core::model::GeneratorConfig;
use sketchedit_core::Error as CoreError;

fn small_config() -> Config {
    Config::parse("size = 32\n[model]\ngenerator_channels = [4, 6, 8, 8]\ndisc_base_channels = 4\ndisc_feature_dim = 8\nglobal_layers = 8\nlocal_layers = 7\n").unwrap()
}

#[test]
fn shard_round_trip_is_lossless() {
    let cfg = small_config();
    let samples = forge_samples(&Source::Synthetic { count: 3 }, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.fsds");
    write_shard(&path, &samples).unwrap();
    let back = read_shard(&path).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!(a.target(), b.target());
        assert_eq!(a.mask_spec(), b.mask_spec());
        let bits = |s: &sketchedit_core::dataset::TrainingSample| s.input().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn corrupt_shards_name_the_offset() {
    let cfg = small_config();
    let samples = forge_samples(&Source::Synthetic { count: 2 }, &cfg).unwrap();
    let bytes = encode_shard(&samples).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_shard(&bad, "t"), Err(AppError::Format { offset: 0, .. })));
    let cut = &bytes[..bytes.len() - 7];
    let per = (bytes.len() - 14) / 2;
    match decode_shard(cut, "t") {
        Err(AppError::Format { offset, .. }) => assert_eq!(offset as usize, 14 + per),
        other => panic!("{other:?}"),
    }
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(decode_shard(&version, "t"), Err(AppError::Format { offset: 4, .. })));
    assert!(encode_shard(&[]).is_err());
}

#[test]
fn config_defaults_and_errors() {
    let d = Config::default();
    assert_eq!(d.size, 64);
    assert_eq!(d.train.batch, 4);
    assert_eq!(d.train.lr, 2e-4);
    assert_eq!((d.train.alpha, d.train.lambda, d.train.epsilon_drift), (1e-3, 100.0, 1e-3));
    assert_eq!(d.generator(), GeneratorConfig::desk());
    assert_eq!(Config::parse(&d.to_toml()).unwrap(), d);
    assert!(matches!(Config::parse("bogus = 1"), Err(AppError::Config(_))));
    assert!(Config::parse("[noise]\ndist = \"cauchy\"").is_err());
    assert!(Config::parse("size = 48").is_err());
    let c = Config::parse("size = 32\n[mask]\naxis_aligned = true\n[train]\ngan_variant = \"original_gan\"").unwrap();
    assert!(c.dataset().unwrap().axis_aligned_masks);
    assert_eq!(c.generator().side, 32);
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let ck = Checkpoint::initial(small_config()).unwrap();
    let bytes = ck.encode();
    let back = Checkpoint::decode(&bytes, "t").unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.hash(), ck.hash());
    let mut flipped = bytes.clone();
    flipped[40] ^= 1;
    assert!(matches!(Checkpoint::decode(&flipped, "t"), Err(AppError::Format { .. })));
    assert!(matches!(Checkpoint::decode(b"nope", "t"), Err(AppError::Format { offset: 0, .. })));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.fsck");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    assert!(!dir.path().join("c.fsck.tmp").exists());
}

#[test]
fn mismatched_parameters_are_a_config_error() {
    let mut ck = Checkpoint::initial(small_config()).unwrap();
    let other = Checkpoint::initial(Config::parse("size = 32\n[model]\ngenerator_channels = [4, 6, 8, 16]\ndisc_base_channels = 4\ndisc_feature_dim = 8\nglobal_layers = 8\nlocal_layers = 7\n").unwrap()).unwrap();
    ck.state.gen_params = other.state.gen_params;
    assert!(matches!(Checkpoint::decode(&ck.encode(), "t"), Err(AppError::Core(CoreError::ConfigMismatch(_)))));
}

#[test]
fn annotations_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("eyes.csv");
    std::fs::write(&p, "file,lx,ly,rx,ry\na.png,10,12.5,30,12\nb.png,1,2,3,4\n").unwrap();
    let a = read_annotations(&p).unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a[0].file, "a.png");
    assert_eq!((a[0].left.y, a[0].right.x), (12.5, 30.0));
    std::fs::write(&p, "file,lx,ly,rx,ry\na.png,x,1,2,3\n").unwrap();
    assert!(matches!(read_annotations(&p), Err(AppError::Format { .. })));
}
