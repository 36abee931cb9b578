use std::fs;
use std::path::Path;

use encounter_core::observations::{empirical_rates, DatasetPaths};
use encounter_core::synthetic::{read_truth, write_truth};
use encounter_core::{generate_world, load_dataset, save_dataset, Error, Split, WorldConfig};

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

fn fixture(dir: &Path) -> DatasetPaths {
    write(dir, "species.txt", "amecro\nbkcchi\nnorcar\n");
    write(
        dir,
        "hotspots.csv",
        "hotspot_id,lat,lon,f0\nL1,42.1,-71.5,0.3\nL2,41.0,-70.2,-1.0\n",
    );
    write(
        dir,
        "checklist_index.csv",
        "hotspot_id,checklist_id\nL1,c1\nL1,c2\nL2,c3\nL2,c4\n",
    );
    write(
        dir,
        "checklists.csv",
        "hotspot_id,checklist_id,species_id\nL1,c1,amecro\nL1,c1,norcar\nL1,c2,amecro\nL2,c4,bkcchi\n",
    );
    DatasetPaths::in_dir(dir)
}

#[test]
fn sparse_records_become_dense_rates() {
    let dir = tempfile::tempdir().unwrap();
    let ds = load_dataset(&fixture(dir.path())).unwrap();
    assert_eq!(ds.n_species(), 3);
    assert_eq!(ds.feature_dim(), Some(1));
    assert_eq!(
        empirical_rates(&ds.hotspots[0]).unwrap(),
        vec![1.0, 0.0, 0.5]
    );
    assert_eq!(
        empirical_rates(&ds.hotspots[1]).unwrap(),
        vec![0.0, 0.5, 0.0]
    );
    // no splits file: every hotspot is evaluated
    assert!(ds.splits.iter().all(|s| *s == Split::Test));
}

#[test]
fn explicit_detection_column() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path());
    write(
        dir.path(),
        "checklists.csv",
        "hotspot_id,checklist_id,species_id,detected\nL1,c1,amecro,1\nL1,c1,norcar,0\n",
    );
    let ds = load_dataset(&paths).unwrap();
    assert_eq!(
        empirical_rates(&ds.hotspots[0]).unwrap(),
        vec![0.5, 0.0, 0.0]
    );
    write(
        dir.path(),
        "checklists.csv",
        "hotspot_id,checklist_id,species_id,detected\nL1,c1,amecro,2\n",
    );
    assert!(matches!(
        load_dataset(&paths),
        Err(Error::Malformed { line: 2, .. })
    ));
}

#[test]
fn validation_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path());

    write(
        dir.path(),
        "checklists.csv",
        "hotspot_id,checklist_id,species_id\nL1,c1,dodo\n",
    );
    match load_dataset(&paths) {
        Err(Error::UnknownSpecies { id, line, .. }) => assert_eq!((id.as_str(), line), ("dodo", 2)),
        other => panic!("{other:?}"),
    }

    write(
        dir.path(),
        "checklists.csv",
        "hotspot_id,checklist_id,species_id\nL1,c9,amecro\n",
    );
    assert!(matches!(
        load_dataset(&paths),
        Err(Error::UnknownChecklist { .. })
    ));

    write(
        dir.path(),
        "checklists.csv",
        "hotspot_id,checklist_id,species_id\nL2,c1,amecro\n",
    );
    assert!(matches!(load_dataset(&paths), Err(Error::Malformed { .. })));

    write(
        dir.path(),
        "checklists.csv",
        "hotspot_id,checklist_id,species_id\n",
    );
    write(
        dir.path(),
        "checklist_index.csv",
        "hotspot_id,checklist_id\nL1,c1\nL2,c1\n",
    );
    assert!(matches!(
        load_dataset(&paths),
        Err(Error::DuplicateChecklist { .. })
    ));

    write(
        dir.path(),
        "checklist_index.csv",
        "hotspot_id,checklist_id\nL7,c1\n",
    );
    assert!(matches!(
        load_dataset(&paths),
        Err(Error::UnknownHotspot { .. })
    ));

    write(
        dir.path(),
        "hotspots.csv",
        "hotspot_id,lat,lon\nL1,95.0,0.0\n",
    );
    let err = load_dataset(&paths).unwrap_err();
    assert!(err.is_data_error());

    fs::remove_file(dir.path().join("species.txt")).unwrap();
    assert!(matches!(
        load_dataset(&paths),
        Err(Error::MissingFile { .. })
    ));
}

#[test]
fn bad_split_labels_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path());
    write(dir.path(), "splits.csv", "hotspot_id,split\nL1,train\n");
    assert!(load_dataset(&paths).unwrap_err().is_data_error());
    write(
        dir.path(),
        "splits.csv",
        "hotspot_id,split\nL1,train\nL2,holdout\n",
    );
    assert!(load_dataset(&paths).unwrap_err().is_data_error());
    write(
        dir.path(),
        "splits.csv",
        "hotspot_id,split\nL1,train\nL2,test\n",
    );
    let ds = load_dataset(&paths).unwrap();
    assert_eq!(ds.splits, vec![Split::Train, Split::Test]);
}

#[test]
fn synthetic_world_roundtrips_through_files() {
    let world = generate_world(&WorldConfig {
        n_hotspots: 12,
        n_species: 7,
        feature_dim: 3,
        checklists_per_hotspot: 9,
        seed: 5,
        ..WorldConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = DatasetPaths::in_dir(dir.path());
    save_dataset(&world.dataset, &paths).unwrap();
    let back = load_dataset(&paths).unwrap();
    assert_eq!(back, world.dataset);

    let truth_path = dir.path().join("truth.csv");
    write_truth(&truth_path, &back, &world.truth).unwrap();
    assert_eq!(read_truth(&truth_path, &back).unwrap(), world.truth);

    // saving twice gives identical bytes
    let first = fs::read(&paths.checklists).unwrap();
    save_dataset(&back, &paths).unwrap();
    assert_eq!(fs::read(&paths.checklists).unwrap(), first);
}
