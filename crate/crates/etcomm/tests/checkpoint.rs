use etcomm::checkpoint::{manifest, Checkpoint, NetworkFile};
use etcomm::error::AppError;
use etcomm::io::{read_json, write_json};
use etcomm_core::agents::{architecture, AgentBundle, TaskSpec, ValueBundle};
use etcomm_core::comms::GateInput;
use etcomm_core::nn::{Activation, Gradient, Mlp};
use etcomm_core::seeded_rng;
use etcomm_core::training::RunSettings;
use proptest::prelude::*;

fn trained_checkpoint(task: TaskSpec) -> Checkpoint {
    let mut rng = seeded_rng(5);
    let arch = architecture(&task, GateInput::WithMemory);
    let mut agents = AgentBundle::new(&arch, &mut rng).unwrap();
    let values = ValueBundle::new(&arch, &mut rng).unwrap();
    // non-trivial Adam moments
    let mut g = Gradient::zeros_like(&agents.actor);
    g.layers[0].weights[3] = 0.25;
    g.layers[2].biases[1] = -1.5;
    agents.actor.adam_step(&g, 1e-3).unwrap();
    agents.actor.adam_step(&g, 1e-3).unwrap();
    Checkpoint {
        manifest: manifest(task, RunSettings::learned(), "stage2", 3, Some(0.69)),
        agents,
        values,
    }
}

#[test]
fn round_trip_is_bitwise() {
    for task in [TaskSpec::nav(), TaskSpec::predator_prey(3)] {
        let ck = trained_checkpoint(task);
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.agents.actor.adam.step, 2);
    }
}

#[test]
fn truncated_weights_are_rejected() {
    let ck = trained_checkpoint(TaskSpec::nav());
    let dir = tempfile::tempdir().unwrap();
    ck.save(dir.path()).unwrap();
    let path = dir.path().join("critic.json");
    let mut file: NetworkFile = read_json(&path).unwrap();
    file.layers[1].weights.pop();
    write_json(&path, &file).unwrap();
    let err = Checkpoint::load(dir.path()).unwrap_err();
    assert!(matches!(err, AppError::Checkpoint(_)), "{err}");
    assert!(err.to_string().contains("critic.json"), "{err}");
}

#[test]
fn moments_must_match_layers() {
    let ck = trained_checkpoint(TaskSpec::nav());
    let mut file = NetworkFile::from_mlp(&ck.agents.gate);
    file.adam.m[0].biases.push(0.0);
    assert!(file.into_mlp().is_err());
    let mut file = NetworkFile::from_mlp(&ck.agents.gate);
    file.adam.v.pop();
    assert!(file.into_mlp().is_err());
}

#[test]
fn networks_must_fit_the_task() {
    let ck = trained_checkpoint(TaskSpec::nav());
    let dir = tempfile::tempdir().unwrap();
    ck.save(dir.path()).unwrap();
    // a gate built for the no-memory ablation has half the inputs
    let small = architecture(&TaskSpec::nav(), GateInput::CurrentOnly)
        .gate
        .build(&mut seeded_rng(1))
        .unwrap();
    write_json(&dir.path().join("gate.json"), &NetworkFile::from_mlp(&small)).unwrap();
    assert!(Checkpoint::load(dir.path()).is_err());
}

#[test]
fn unknown_formats_are_rejected() {
    let ck = trained_checkpoint(TaskSpec::nav());
    let mut file = NetworkFile::from_mlp(&ck.agents.encoder);
    file.format = "something-else".into();
    assert!(file.into_mlp().is_err());

    let dir = tempfile::tempdir().unwrap();
    ck.save(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    std::fs::write(dir.path().join("manifest.json"), text.replace("etcomm-checkpoint/1", "v0")).unwrap();
    assert!(Checkpoint::load(dir.path()).is_err());
}

#[test]
fn task_mismatch_is_reported() {
    let ck = trained_checkpoint(TaskSpec::nav());
    assert!(ck.expect_task(&TaskSpec::nav()).is_ok());
    assert!(ck.expect_task(&TaskSpec::predator_prey(3)).is_err());
}

proptest! {
    #[test]
    fn network_file_round_trips(sizes in prop::collection::vec(1usize..6, 2..5), seed in 0u64..1000) {
        let n = sizes.len() - 1;
        let mut acts = vec![Activation::Relu; n];
        acts[n - 1] = Activation::Tanh;
        let mut net = Mlp::new(&sizes, &acts, &mut seeded_rng(seed)).unwrap();
        let mut g = Gradient::zeros_like(&net);
        g.layers[0].biases[0] = 1.0;
        net.adam_step(&g, 0.01).unwrap();
        let text = serde_json::to_string(&NetworkFile::from_mlp(&net)).unwrap();
        let back: NetworkFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.into_mlp().unwrap(), net);
    }
}
