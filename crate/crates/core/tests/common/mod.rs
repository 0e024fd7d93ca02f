#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use expcopilot::canonical::verbalize_discrete;
use expcopilot::io;
use expcopilot::retrieval::{KnowledgeItem, Provenance};
use expcopilot::space::{discrete_from_strings, SolutionSpace, Task};
use expcopilot::suggestion::DemoBlock;
use serde::Deserialize;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn synthetic_dir() -> PathBuf {
    fixtures().join("synthetic")
}

pub fn svm_dir() -> PathBuf {
    fixtures().join("svm")
}

#[derive(Deserialize)]
struct DemoFile {
    #[serde(default)]
    query: Option<String>,
    demos: Vec<DemoTask>,
}

#[derive(Deserialize)]
struct DemoTask {
    task_id: String,
    configurations: Vec<BTreeMap<String, String>>,
}

pub struct SvmFixture {
    pub space: SolutionSpace,
    pub tasks: Vec<Task>,
}

impl SvmFixture {
    pub fn load() -> Self {
        let dir = svm_dir();
        SvmFixture {
            space: io::read_json(&dir.join("space.json")).unwrap(),
            tasks: io::read_jsonl(&dir.join("tasks.jsonl")).unwrap(),
        }
    }

    pub fn task(&self, id: &str) -> &Task {
        self.tasks.iter().find(|t| t.task_id == id).unwrap()
    }

    /// Demonstration blocks of a demo file plus its query task, if any.
    pub fn demos(&self, file: &str) -> (Vec<DemoBlock>, Option<&Task>) {
        let f: DemoFile = io::read_json(&svm_dir().join(file)).unwrap();
        let blocks = f
            .demos
            .iter()
            .map(|d| DemoBlock {
                description: self.task(&d.task_id).description.clone(),
                configurations: d
                    .configurations
                    .iter()
                    .map(|c| {
                        verbalize_discrete(
                            &discrete_from_strings(&self.space, c).unwrap(),
                            &self.space,
                        )
                    })
                    .collect(),
            })
            .collect();
        (blocks, f.query.as_deref().map(|q| self.task(q)))
    }

    pub fn guidelines(&self) -> KnowledgeItem {
        KnowledgeItem {
            space_id: self.space.space_id.clone(),
            text: std::fs::read_to_string(svm_dir().join("guidelines.txt")).unwrap(),
            validation_score: 1.0,
            provenance: Provenance {
                question: "fixture".into(),
                temperature: 0.0,
                round: 1,
            },
        }
    }

    pub fn golden(&self, name: &str) -> String {
        std::fs::read_to_string(svm_dir().join("golden").join(name)).unwrap()
    }
}

/// Config for the synthetic fixture with outputs under `out`.
pub fn synthetic_config(out: &Path) -> PathBuf {
    let b = synthetic_dir().join("benchmark");
    let text = format!(
        r#"seed = 0

[backend]
kind = "scripted"

[paths]
space = "{b}/space.json"
tasks = "{b}/tasks.jsonl"
history = ["{b}/table.jsonl"]
benchmark = "{b}"
pools = "{o}/pools"
reports = "{o}/reports"

[eval]
seeds = [0, 1, 2, 3, 4]
"#,
        b = b.display(),
        o = out.display()
    );
    let path = out.join("expcopilot.toml");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&path, text).unwrap();
    path
}
