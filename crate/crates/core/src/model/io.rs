use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{read_checkpoint, write_checkpoint, AdamConfig, AdamState, Checkpoint, Module, NnError, Param, Scalar};

use super::{GanArch, GanMode, ModelError, NetworkBundle, TrainConfig, TrainHistory};

const NETWORKS: [&str; 4] = ["style", "mapping", "generator", "discriminator"];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimMeta {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleMeta {
    mode: GanMode,
    arch: GanArch,
    steps_trained: u64,
    best_step: Option<u64>,
    optim: Vec<OptimMeta>,
}

fn bad(msg: impl Into<String>) -> ModelError {
    NnError::Checkpoint(msg.into()).into()
}

fn shape_of<T>(p: &Param<T>) -> Vec<usize> {
    p.shape.clone()
}

fn to_f32<T: Scalar>(v: &[T]) -> Vec<f32> {
    v.iter().map(|x| x.to_f32().unwrap()).collect()
}

fn from_f32<T: Scalar>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x as f64)).collect()
}

fn put_module<T: Scalar>(ckpt: &mut Checkpoint, name: &str, m: &impl Module<T>, opt: &AdamState<T>) {
    for (k, (pname, p)) in m.params(name).into_iter().enumerate() {
        ckpt.insert(pname, shape_of(p), to_f32(&p.value));
        ckpt.insert(format!("opt.{name}.m.{k}"), vec![p.len()], to_f32(&opt.m[k]));
        ckpt.insert(format!("opt.{name}.v.{k}"), vec![p.len()], to_f32(&opt.v[k]));
    }
}

fn take_module<T: Scalar>(
    ckpt: &Checkpoint,
    name: &str,
    m: &mut impl Module<T>,
    opt: &mut AdamState<T>,
) -> Result<(), ModelError> {
    let names: Vec<String> = m.params(name).into_iter().map(|(n, _)| n).collect();
    for (k, (pname, p)) in names.iter().zip(m.params_mut()).enumerate() {
        let (shape, values) = ckpt.get(pname)?;
        if *shape != p.shape {
            return Err(bad(format!("{pname}: stored shape {shape:?}, expected {:?}", p.shape)));
        }
        p.value = from_f32(values);
        for (slot, tag) in [(&mut opt.m[k], "m"), (&mut opt.v[k], "v")] {
            let (_, vals) = ckpt.get(&format!("opt.{name}.{tag}.{k}"))?;
            if vals.len() != p.len() {
                return Err(bad(format!("optimizer moment {tag} for {pname} has wrong length")));
            }
            *slot = from_f32(vals);
        }
    }
    Ok(())
}

/// Parameters, optimizer moments and metadata in checkpoint form.
pub fn bundle_to_checkpoint<T: Scalar>(nets: &NetworkBundle<T>, best_step: Option<u64>) -> Checkpoint {
    let meta = BundleMeta {
        mode: nets.mode,
        arch: nets.arch.clone(),
        steps_trained: nets.steps_trained,
        best_step,
        optim: [
            &nets.optim.style,
            &nets.optim.mapping,
            &nets.optim.generator,
            &nets.optim.discriminator,
        ]
        .iter()
        .map(|s| OptimMeta {
            config: s.config,
            step: s.step,
        })
        .collect(),
    };
    let mut ckpt = Checkpoint {
        networks: NETWORKS.iter().map(|s| s.to_string()).collect(),
        meta: serde_json::to_value(&meta).expect("meta serializes"),
        ..Default::default()
    };
    put_module(&mut ckpt, "style", &nets.style, &nets.optim.style);
    put_module(&mut ckpt, "mapping", &nets.mapping, &nets.optim.mapping);
    put_module(&mut ckpt, "generator", &nets.generator, &nets.optim.generator);
    put_module(&mut ckpt, "discriminator", &nets.discriminator, &nets.optim.discriminator);
    ckpt
}

pub fn bundle_from_checkpoint<T: Scalar>(ckpt: &Checkpoint) -> Result<NetworkBundle<T>, ModelError> {
    let meta: BundleMeta = serde_json::from_value(ckpt.meta.clone()).map_err(|e| bad(format!("metadata: {e}")))?;
    if meta.optim.len() != 4 {
        return Err(bad("expected optimizer metadata for four networks"));
    }
    let mut cfg = TrainConfig::new(meta.mode, 0);
    cfg.arch = meta.arch.clone();
    let mut nets = NetworkBundle::<T>::new(&cfg)?;
    take_module(ckpt, "style", &mut nets.style, &mut nets.optim.style)?;
    take_module(ckpt, "mapping", &mut nets.mapping, &mut nets.optim.mapping)?;
    take_module(ckpt, "generator", &mut nets.generator, &mut nets.optim.generator)?;
    take_module(ckpt, "discriminator", &mut nets.discriminator, &mut nets.optim.discriminator)?;
    let states = [
        &mut nets.optim.style,
        &mut nets.optim.mapping,
        &mut nets.optim.generator,
        &mut nets.optim.discriminator,
    ];
    for (s, m) in states.into_iter().zip(&meta.optim) {
        s.config = m.config;
        s.step = m.step;
    }
    nets.steps_trained = meta.steps_trained;
    Ok(nets)
}

pub fn save_bundle<T: Scalar>(path: &Path, nets: &NetworkBundle<T>, best_step: Option<u64>) -> Result<(), ModelError> {
    Ok(write_checkpoint(path, &bundle_to_checkpoint(nets, best_step))?)
}

pub fn load_bundle<T: Scalar>(path: &Path) -> Result<NetworkBundle<T>, ModelError> {
    if !path.is_file() {
        return Err(ModelError::Io(format!("checkpoint {} not found", path.display())));
    }
    bundle_from_checkpoint(&read_checkpoint(path)?)
}

pub fn save_history(path: &Path, history: &TrainHistory) -> Result<(), ModelError> {
    let json = serde_json::to_string_pretty(history).expect("history serializes");
    std::fs::write(path, json).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}
