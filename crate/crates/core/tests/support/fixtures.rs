//! Programs and brute-force helpers shared by several test targets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use iccflow_core::analysis::{load_corpus, ReportedPath};
use iccflow_core::ir::{AppModel, StmtId, StmtKind};

pub const SHARED_LISTENER: &str = r#"app "SL" {
  component activity Left {
    filter { action "android.intent.action.MAIN" }
    method onCreate() {
      s = source getDeviceId          # @srcL
      this.secret = s
    }
    callback onClick(v) {
      l = new Sender
      call l->Sender.send(this)
    }
    method onActivityResult(data) {
      x = get_extra data "echo"
      sink log x                       # @sinkL
    }
  }
  component activity Right {
    filter { action "android.intent.action.MAIN" }
    method onCreate() {
      s = source getSimSerialNumber    # @srcR
      this.secret = s
    }
    callback onClick(v) {
      l = new Sender
      call l->Sender.send(this)
    }
    method onActivityResult(data) {
      x = get_extra data "echo"
      sink sendTextMessage x           # @sinkR
    }
  }
  component activity Echo {
    filter { action "sl.ECHO" }
    method onCreate() {
      i = get_intent
      v = get_extra i "payload"
      r = new_intent
      put_extra r "echo" v
      set_result r
    }
  }
  class Sender {
    method send(act) {
      p = act.secret
      i = new_intent
      set_action i "sl.ECHO"
      put_extra i "payload" p
      icc start_activity_for_result i from act
    }
  }
}
"#;

pub fn without_unit(text: &str, name: &str) -> String {
    let start = text.find(&format!("  component activity {name} {{")).unwrap();
    let end = start + text[start..].find("\n  }\n").unwrap() + "\n  }\n".len();
    format!("{}{}", &text[..start], &text[end..])
}

/// Inserts `dst = ""` right after the source statement of `p`; also
/// returns the inserted line's index.
pub fn with_kill(apps: &[(AppModel, String)], p: &ReportedPath) -> (Vec<(AppModel, String)>, usize) {
    let mut at = 0;
    let out = apps
        .iter()
        .map(|(m, text)| {
            if m.app_id != p.path.source.unit.app {
                return (m.clone(), text.clone());
            }
            let s = m.stmt(&p.path.source).expect("source statement");
            let StmtKind::Source { dst, .. } = &s.kind else { panic!("not a source") };
            at = s.pos.line as usize;
            let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
            lines.insert(at, format!("      {dst} = \"\""));
            let t = lines.join("\n") + "\n";
            (super::parse(&t), t)
        })
        .collect();
    (out, at)
}

pub fn without_line(text: &str, at: usize) -> String {
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(at);
    lines.join("\n") + "\n"
}

pub fn leak_keys(apps: &[(AppModel, String)]) -> BTreeSet<(StmtId, String)> {
    let models: Vec<AppModel> = apps.iter().map(|a| a.0.clone()).collect();
    super::analyze(&models, &super::config(), 2)
        .paths
        .iter()
        .map(|p| (p.path.source.clone(), p.sink_tag.clone().expect("corpus sinks are tagged")))
        .collect()
}

/// Every two-app input in the corpus.
pub fn two_app_cases() -> Vec<Vec<AppModel>> {
    let root = super::corpus_root();
    let mut out = Vec::new();
    let mut dirs: Vec<_> = std::fs::read_dir(root.join("droidbench")).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    for d in dirs {
        let (apps, _) = load_corpus(&d);
        if apps.len() == 2 {
            out.push(apps.into_iter().map(|a| a.model).collect());
        }
    }
    let (trio, _) = load_corpus(&root.join("three_apps"));
    let trio: Vec<AppModel> = trio.into_iter().map(|a| a.model).collect();
    for i in 0..trio.len() {
        for j in i + 1..trio.len() {
            out.push(vec![trio[i].clone(), trio[j].clone()]);
        }
    }
    out
}

/// Node sets of all simple paths with at most `max` nodes, by brute force
/// over ordered node sequences.
pub fn brute_paths(nodes: &[String], adj: &BTreeSet<(String, String)>, max: usize) -> BTreeSet<BTreeSet<String>> {
    let linked = |a: &String, b: &String| adj.contains(&(a.clone(), b.clone())) || adj.contains(&(b.clone(), a.clone()));
    let mut out = BTreeSet::new();
    let mut seqs: Vec<Vec<String>> = nodes.iter().map(|n| vec![n.clone()]).collect();
    for _ in 0..max {
        let mut next = Vec::new();
        for s in seqs {
            out.insert(s.iter().cloned().collect());
            for n in nodes {
                if !s.contains(n) && linked(s.last().unwrap(), n) {
                    let mut t = s.clone();
                    t.push(n.clone());
                    next.push(t);
                }
            }
        }
        seqs = next;
    }
    out
}

pub fn graph_components(nodes: &[String], adj: &BTreeSet<(String, String)>) -> Vec<BTreeSet<String>> {
    let mut comp: Vec<usize> = (0..nodes.len()).collect();
    let idx = |n: &String| nodes.iter().position(|x| x == n).unwrap();
    loop {
        let mut changed = false;
        for (a, b) in adj {
            let (i, j) = (idx(a), idx(b));
            let m = comp[i].min(comp[j]);
            if comp[i] != m || comp[j] != m {
                comp[i] = m;
                comp[j] = m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let ids: BTreeSet<usize> = comp.iter().cloned().collect();
    ids.into_iter()
        .map(|c| nodes.iter().zip(&comp).filter(|(_, k)| **k == c).map(|(n, _)| n.clone()).collect())
        .collect()
}


/// Corpus directories holding analyzable programs, in a fixed order.
pub fn analysis_dirs() -> Vec<PathBuf> {
    let root = super::corpus_root();
    let mut dirs = vec![root.join("motivating"), root.join("three_apps")];
    let mut cases: Vec<PathBuf> = std::fs::read_dir(root.join("droidbench")).unwrap().map(|e| e.unwrap().path()).collect();
    cases.sort();
    dirs.extend(cases);
    dirs
}

pub fn load(dir: &Path) -> Vec<(AppModel, String)> {
    let (apps, diags) = load_corpus(dir);
    assert!(diags.iter().all(|d| !d.is_error()), "{diags:?}");
    apps.into_iter().map(|a| (a.model, a.text)).collect()
}

/// Checks that a kill right after each reported source removes that leak
/// and that undoing the edit brings it back. Returns the number of leaks.
pub fn check_kills(dir: &Path) -> Result<usize, String> {
    let apps = load(dir);
    let models: Vec<AppModel> = apps.iter().map(|a| a.0.clone()).collect();
    let report = super::analyze(&models, &super::config(), 2);
    let before = leak_keys(&apps);
    for p in &report.paths {
        let key = (p.path.source.clone(), p.sink_tag.clone().ok_or("untagged sink")?);
        let (killed, at) = with_kill(&apps, p);
        if leak_keys(&killed).contains(&key) {
            return Err(format!("{}: {key:?} survives the kill", dir.display()));
        }
        let restored: Vec<(AppModel, String)> = killed
            .iter()
            .zip(&apps)
            .map(|((m, t), (orig, orig_text))| {
                if m.app_id != p.path.source.unit.app {
                    return (orig.clone(), orig_text.clone());
                }
                let t = without_line(t, at);
                assert_eq!(t.trim_end(), orig_text.trim_end());
                (super::parse(&t), t)
            })
            .collect();
        if leak_keys(&restored) != before {
            return Err(format!("{}: restoring the source did not restore {key:?}", dir.display()));
        }
    }
    Ok(report.paths.len())
}
