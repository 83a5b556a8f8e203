//! Processing-unit discovery and the pin order of pipeline workers.
//!
//! The machine is described as a tree (package, L3 group, L2 group, core,
//! PU). Workers are pinned in depth-first leaf order, so consecutive stages
//! land on SMT siblings first, then on cores sharing a cache.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Machine,
    Package,
    L3,
    L2,
    Core,
    Pu,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopoNode {
    pub level: Level,
    /// OS index for PUs.
    pub os_index: Option<usize>,
    pub children: Vec<TopoNode>,
}

impl TopoNode {
    pub fn pu(os_index: usize) -> Self {
        TopoNode {
            level: Level::Pu,
            os_index: Some(os_index),
            children: Vec::new(),
        }
    }

    pub fn group(level: Level, children: Vec<TopoNode>) -> Self {
        TopoNode {
            level,
            os_index: None,
            children,
        }
    }

    /// PU indices in depth-first leaf order.
    pub fn dfs_pus(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let Some(i) = node.os_index {
                out.push(i);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    fn min_pu(&self) -> usize {
        self.dfs_pus().into_iter().min().unwrap_or(usize::MAX)
    }
}

/// Where one PU sits in the machine. Cache groups are identified by any key
/// shared by the PUs of the group (sysfs uses the shared CPU list).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PuInfo {
    pub os_index: usize,
    pub package: usize,
    pub l3: Option<String>,
    pub l2: Option<String>,
    pub core: usize,
}

/// Assemble the topology tree. Children are ordered by their smallest PU
/// index, PUs by OS index.
pub fn build_tree(pus: &[PuInfo]) -> TopoNode {
    type Cores = BTreeMap<usize, Vec<usize>>;
    type L2s = BTreeMap<Option<String>, Cores>;
    type L3s = BTreeMap<Option<String>, L2s>;
    let mut tree: BTreeMap<usize, L3s> = BTreeMap::new();
    for p in pus {
        tree.entry(p.package)
            .or_default()
            .entry(p.l3.clone())
            .or_default()
            .entry(p.l2.clone())
            .or_default()
            .entry(p.core)
            .or_default()
            .push(p.os_index);
    }

    fn sorted(mut v: Vec<TopoNode>) -> Vec<TopoNode> {
        v.sort_by_key(TopoNode::min_pu);
        v
    }

    let packages = tree
        .into_values()
        .map(|l3s| {
            let l3_nodes = l3s
                .into_values()
                .map(|l2s| {
                    let l2_nodes = l2s
                        .into_values()
                        .map(|cores| {
                            let core_nodes = cores
                                .into_values()
                                .map(|mut ids| {
                                    ids.sort_unstable();
                                    TopoNode::group(Level::Core, ids.into_iter().map(TopoNode::pu).collect())
                                })
                                .collect();
                            TopoNode::group(Level::L2, sorted(core_nodes))
                        })
                        .collect();
                    TopoNode::group(Level::L3, sorted(l2_nodes))
                })
                .collect();
            TopoNode::group(Level::Package, sorted(l3_nodes))
        })
        .collect();
    TopoNode::group(Level::Machine, sorted(packages))
}

/// Parse a Linux CPU list such as `0-3,8,10-11`.
pub fn parse_cpu_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("malformed CPU list {s:?}"));
    let mut out = Vec::new();
    for part in s.trim().split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.trim().parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// CPUs this process may run on.
pub fn allowed_cpus() -> Option<Vec<usize>> {
    #[cfg(target_os = "linux")]
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return None;
        }
        let cpus: Vec<usize> = (0..libc::CPU_SETSIZE as usize)
            .filter(|&c| libc::CPU_ISSET(c, &set))
            .collect();
        (!cpus.is_empty()).then_some(cpus)
    }
    #[cfg(not(target_os = "linux"))]
    {
        None
    }
}

fn read_trimmed(path: &Path) -> Option<String> {
    fs::read_to_string(path).ok().map(|s| s.trim().to_owned())
}

fn cache_key(cpu_dir: &Path, level: &str) -> Option<String> {
    let entries = fs::read_dir(cpu_dir.join("cache")).ok()?;
    for e in entries.flatten() {
        let dir = e.path();
        if read_trimmed(&dir.join("level")).as_deref() != Some(level) {
            continue;
        }
        if read_trimmed(&dir.join("type")).as_deref() == Some("Instruction") {
            continue;
        }
        return read_trimmed(&dir.join("shared_cpu_list"));
    }
    None
}

/// Read the topology of `cpus` from a sysfs-style directory tree.
pub fn discover_from(root: &Path, cpus: &[usize]) -> Option<TopoNode> {
    let mut pus = Vec::with_capacity(cpus.len());
    for &c in cpus {
        let dir = root.join(format!("cpu{c}"));
        let topo = dir.join("topology");
        let package = read_trimmed(&topo.join("physical_package_id"))?.parse().ok()?;
        let core = read_trimmed(&topo.join("core_id"))?.parse().ok()?;
        pus.push(PuInfo {
            os_index: c,
            package,
            l3: cache_key(&dir, "3"),
            l2: cache_key(&dir, "2"),
            core,
        });
    }
    (!pus.is_empty()).then(|| build_tree(&pus))
}

/// Topology of the CPUs this process may use, if the OS exposes it.
pub fn discover() -> Option<TopoNode> {
    let cpus = allowed_cpus()?;
    discover_from(Path::new("/sys/devices/system/cpu"), &cpus)
}

/// How workers are bound to processing units.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum PinningMode {
    /// Depth-first topology order; sequential PU ids when discovery fails.
    #[default]
    Auto,
    /// Leave placement to the scheduler.
    None,
    /// Worker `t` goes to the `t`-th listed PU.
    Explicit(Vec<usize>),
}

impl fmt::Display for PinningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PinningMode::Auto => f.write_str("auto"),
            PinningMode::None => f.write_str("none"),
            PinningMode::Explicit(list) => {
                let s: Vec<String> = list.iter().map(|c| c.to_string()).collect();
                f.write_str(&s.join(","))
            }
        }
    }
}

impl FromStr for PinningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(PinningMode::Auto),
            "none" => Ok(PinningMode::None),
            other => parse_cpu_list(other).map(PinningMode::Explicit).map_err(|_| {
                Error::InvalidParameter(format!("pinning must be auto, none or a CPU list (got {s:?})"))
            }),
        }
    }
}

/// PU for each worker, or `None` for an unpinned worker.
pub fn plan_pinning(
    mode: &PinningMode,
    threads: usize,
    allowed: Option<&[usize]>,
    topology: Option<&TopoNode>,
) -> Result<Vec<Option<usize>>> {
    match mode {
        PinningMode::None => Ok(vec![None; threads]),
        PinningMode::Auto => {
            let mut order = topology.map(TopoNode::dfs_pus).unwrap_or_default();
            if let Some(allowed) = allowed {
                order.retain(|c| allowed.contains(c));
            }
            if order.is_empty() {
                return Ok((0..threads).map(Some).collect());
            }
            Ok((0..threads).map(|t| Some(order[t % order.len()])).collect())
        }
        PinningMode::Explicit(list) => {
            if threads > list.len() {
                return Err(Error::Pinning(format!(
                    "{threads} workers but only {} PUs listed",
                    list.len()
                )));
            }
            if let Some(allowed) = allowed {
                if let Some(bad) = list[..threads].iter().find(|c| !allowed.contains(c)) {
                    return Err(Error::Pinning(format!("PU {bad} is not available to this process")));
                }
            }
            Ok(list[..threads].iter().copied().map(Some).collect())
        }
    }
}

/// Bind the calling thread to one PU.
pub(crate) fn pin_current_thread(pu: usize) -> std::io::Result<()> {
    #[cfg(target_os = "linux")]
    unsafe {
        if pu >= libc::CPU_SETSIZE as usize {
            return Err(std::io::Error::from(std::io::ErrorKind::InvalidInput));
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(pu, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(std::io::Error::last_os_error());
        }
        Ok(())
    }
    #[cfg(not(target_os = "linux"))]
    {
        let _ = pu;
        Err(std::io::Error::from(std::io::ErrorKind::Unsupported))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pu(os_index: usize, core: usize) -> PuInfo {
        PuInfo {
            os_index,
            package: 0,
            l3: Some("0-3".into()),
            l2: Some(format!("core{core}")),
            core,
        }
    }

    #[test]
    fn dfs_fills_smt_siblings_first() {
        // OS numbering interleaves the cores: core0 = {0, 2}, core1 = {1, 3}
        let tree = build_tree(&[pu(0, 0), pu(1, 1), pu(2, 0), pu(3, 1)]);
        assert_eq!(tree.dfs_pus(), vec![0, 2, 1, 3]);
        let plan = plan_pinning(&PinningMode::Auto, 4, None, Some(&tree)).unwrap();
        assert_eq!(plan, vec![Some(0), Some(2), Some(1), Some(3)]);
    }

    #[test]
    fn dfs_visits_each_pu_once() {
        let mut pus = Vec::new();
        for pkg in 0..2 {
            for core in 0..4 {
                for smt in 0..2 {
                    pus.push(PuInfo {
                        os_index: pkg * 4 + core + smt * 8,
                        package: pkg,
                        l3: Some(format!("pkg{pkg}")),
                        l2: Some(format!("{pkg}.{core}")),
                        core,
                    });
                }
            }
        }
        let order = build_tree(&pus).dfs_pus();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
        assert_eq!(&order[..4], &[0, 8, 1, 9]);
    }

    #[test]
    fn auto_falls_back_and_wraps() {
        assert_eq!(
            plan_pinning(&PinningMode::Auto, 3, None, None).unwrap(),
            vec![Some(0), Some(1), Some(2)]
        );
        let tree = build_tree(&[pu(5, 0)]);
        assert_eq!(
            plan_pinning(&PinningMode::Auto, 2, Some(&[5]), Some(&tree)).unwrap(),
            vec![Some(5), Some(5)]
        );
    }

    #[test]
    fn explicit_mode_checks_the_list() {
        let mode: PinningMode = "0-1".parse().unwrap();
        assert_eq!(mode, PinningMode::Explicit(vec![0, 1]));
        assert!(matches!(plan_pinning(&mode, 3, None, None), Err(Error::Pinning(_))));
        assert!(matches!(plan_pinning(&mode, 2, Some(&[0]), None), Err(Error::Pinning(_))));
        assert_eq!(plan_pinning(&mode, 1, Some(&[0]), None).unwrap(), vec![Some(0)]);
        assert_eq!(plan_pinning(&PinningMode::None, 2, None, None).unwrap(), vec![None, None]);
    }

    #[test]
    fn cpu_lists() {
        assert_eq!(parse_cpu_list("0-3,8,10-11\n").unwrap(), vec![0, 1, 2, 3, 8, 10, 11]);
        assert!(parse_cpu_list("3-1").is_err());
        assert!(parse_cpu_list("").is_err());
        assert!("bogus".parse::<PinningMode>().is_err());
        assert_eq!("AUTO".parse::<PinningMode>().unwrap(), PinningMode::Auto);
        assert_eq!(PinningMode::Explicit(vec![1, 4]).to_string(), "1,4");
    }

    #[test]
    fn reads_a_sysfs_tree() {
        let dir = tempfile::tempdir().unwrap();
        for (cpu, core) in [(0, 0), (1, 1), (2, 0), (3, 1)] {
            let base = dir.path().join(format!("cpu{cpu}"));
            fs::create_dir_all(base.join("topology")).unwrap();
            fs::write(base.join("topology/physical_package_id"), "0\n").unwrap();
            fs::write(base.join("topology/core_id"), format!("{core}\n")).unwrap();
            let l2 = base.join("cache/index2");
            fs::create_dir_all(&l2).unwrap();
            fs::write(l2.join("level"), "2\n").unwrap();
            fs::write(l2.join("type"), "Unified\n").unwrap();
            fs::write(l2.join("shared_cpu_list"), if core == 0 { "0,2\n" } else { "1,3\n" }).unwrap();
        }
        let tree = discover_from(dir.path(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(tree.dfs_pus(), vec![0, 2, 1, 3]);
        assert!(discover_from(dir.path(), &[7]).is_none());
    }

    #[test]
    fn host_discovery_lists_allowed_cpus() {
        if let (Some(allowed), Some(tree)) = (allowed_cpus(), discover()) {
            let mut order = tree.dfs_pus();
            order.sort_unstable();
            assert_eq!(order, allowed);
        }
    }
}
