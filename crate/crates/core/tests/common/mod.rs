#![allow(dead_code)]

use std::path::PathBuf;

use clusterbo::layer_model::NetworkDescriptor;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn net_path(name: &str) -> PathBuf {
    data_dir().join("nets").join(format!("{name}.net"))
}

pub fn net(name: &str) -> NetworkDescriptor {
    NetworkDescriptor::load(net_path(name)).unwrap()
}

pub fn net_text(name: &str) -> String {
    std::fs::read_to_string(net_path(name)).unwrap()
}

pub const NETS: [&str; 4] = ["resnet56", "mobilenetv1", "mobilenetv2", "vgg16"];

pub fn random_policy<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(0.05..=1.0)).collect()
}
