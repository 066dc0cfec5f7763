use std::collections::BTreeMap;

use super::case::PowerCase;
use super::GridError;

/// One region's view of the network. All bus, line, and generator entries are
/// indices into the owning [`PowerCase`]; neighbor entries are region indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: u32,
    /// I_r: buses of the region without a tie line.
    pub internal: Vec<usize>,
    /// U_r: buses of the region with at least one tie line.
    pub boundary: Vec<usize>,
    /// V_r: buses outside the region adjacent to some boundary bus.
    pub foreign: Vec<usize>,
    /// N_r
    pub neighbors: Vec<usize>,
    /// Lines with exactly one endpoint in the region.
    pub tie_lines: Vec<usize>,
    /// Lines with both endpoints in the region.
    pub internal_lines: Vec<usize>,
    /// G_r
    pub generators: Vec<usize>,
    /// G_r^d: generators with maintenance data.
    pub degraded: Vec<usize>,
}

impl Region {
    /// I_r ∪ U_r in ascending bus order.
    pub fn own_buses(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.internal.iter().chain(&self.boundary).copied().collect();
        v.sort_unstable();
        v
    }

    /// B_r = U_r ∪ V_r, the buses whose angles are coupled by consensus.
    pub fn monitored_buses(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().chain(&self.foreign).copied().collect();
        v.sort_unstable();
        v
    }

    /// I_r ∪ U_r ∪ V_r: every bus carrying a θ variable in the regional model.
    pub fn modelled_buses(&self) -> Vec<usize> {
        let mut v = self.own_buses();
        v.extend(&self.foreign);
        v.sort_unstable();
        v
    }
}

/// Disjoint cover of the buses by regions, with per-region derived sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    bus_region: Vec<usize>,
    regions: Vec<Region>,
}

impl RegionPartition {
    /// Builds the partition from a bus-id → region-label map. Labels must form
    /// a contiguous range; a gap is reported as an empty region.
    pub fn from_map(case: &PowerCase, map: &BTreeMap<String, u32>) -> Result<Self, GridError> {
        for id in map.keys() {
            if case.bus_index(id).is_none() {
                return Err(GridError::UnknownBus { field: "regions".into(), bus: id.clone() });
            }
        }
        let mut labels = Vec::with_capacity(case.buses.len());
        for bus in &case.buses {
            match map.get(&bus.id) {
                Some(r) => labels.push(*r),
                None => return Err(GridError::UncoveredBus(bus.id.clone())),
            }
        }
        Self::from_labels(case, &labels)
    }

    /// Builds the partition from one region label per bus, in bus order.
    pub fn from_labels(case: &PowerCase, labels: &[u32]) -> Result<Self, GridError> {
        if labels.len() != case.buses.len() {
            let missing = &case.buses[labels.len().min(case.buses.len().saturating_sub(1))];
            return Err(GridError::UncoveredBus(missing.id.clone()));
        }
        let lo = *labels.iter().min().expect("case has buses");
        let hi = *labels.iter().max().expect("case has buses");
        for label in lo..=hi {
            if !labels.contains(&label) {
                return Err(GridError::EmptyRegion(label));
            }
        }
        let bus_region: Vec<usize> = labels.iter().map(|l| (l - lo) as usize).collect();
        let count = (hi - lo) as usize + 1;

        let mut regions: Vec<Region> = (0..count)
            .map(|r| Region {
                label: lo + r as u32,
                internal: Vec::new(),
                boundary: Vec::new(),
                foreign: Vec::new(),
                neighbors: Vec::new(),
                tie_lines: Vec::new(),
                internal_lines: Vec::new(),
                generators: Vec::new(),
                degraded: Vec::new(),
            })
            .collect();

        for (i, line) in case.lines.iter().enumerate() {
            let (ra, rb) = (bus_region[line.from], bus_region[line.to]);
            if ra == rb {
                regions[ra].internal_lines.push(i);
                continue;
            }
            for (r, own, other, other_region) in
                [(ra, line.from, line.to, rb), (rb, line.to, line.from, ra)]
            {
                let region = &mut regions[r];
                region.tie_lines.push(i);
                region.boundary.push(own);
                region.foreign.push(other);
                region.neighbors.push(other_region);
            }
        }
        for (b, &r) in bus_region.iter().enumerate() {
            if !regions[r].boundary.contains(&b) {
                regions[r].internal.push(b);
            }
        }
        for (g, gen) in case.generators.iter().enumerate() {
            let r = bus_region[gen.bus];
            regions[r].generators.push(g);
            if case.maintenance_for(g).is_some() {
                regions[r].degraded.push(g);
            }
        }
        for region in &mut regions {
            for v in [&mut region.boundary, &mut region.foreign, &mut region.neighbors] {
                v.sort_unstable();
                v.dedup();
            }
        }
        Ok(RegionPartition { bus_region, regions })
    }

    /// Every bus in one region.
    pub fn single(case: &PowerCase) -> Self {
        Self::from_labels(case, &vec![1; case.buses.len()]).expect("single region is valid")
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, r: usize) -> &Region {
        &self.regions[r]
    }

    pub fn region_of(&self, bus: usize) -> usize {
        self.bus_region[bus]
    }

    pub fn index_of(&self, label: u32) -> Option<usize> {
        self.regions.iter().position(|r| r.label == label)
    }

    pub fn is_tie_line(&self, case: &PowerCase, line: usize) -> bool {
        let l = &case.lines[line];
        self.bus_region[l.from] != self.bus_region[l.to]
    }

    /// V_r^b: foreign buses reached from boundary bus `bus` of its region.
    pub fn foreign_of(&self, case: &PowerCase, bus: usize) -> Vec<usize> {
        let r = self.bus_region[bus];
        let mut v: Vec<usize> = case
            .lines_at(bus)
            .map(|i| case.lines[i].other_end(bus))
            .filter(|&o| self.bus_region[o] != r)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// I_r^b: same-region buses adjacent to `bus`.
    pub fn internal_neighbors_of(&self, case: &PowerCase, bus: usize) -> Vec<usize> {
        let r = self.bus_region[bus];
        let mut v: Vec<usize> = case
            .lines_at(bus)
            .map(|i| case.lines[i].other_end(bus))
            .filter(|&o| self.bus_region[o] == r)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// N_r^b: regions reached by tie lines from `bus`.
    pub fn neighbor_regions_of(&self, case: &PowerCase, bus: usize) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.foreign_of(case, bus).into_iter().map(|o| self.bus_region[o]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Tie lines shared by regions `a` and `b`.
    pub fn shared_tie_lines(&self, case: &PowerCase, a: usize, b: usize) -> Vec<usize> {
        self.regions[a]
            .tie_lines
            .iter()
            .copied()
            .filter(|&i| {
                let l = &case.lines[i];
                let ends = (self.bus_region[l.from], self.bus_region[l.to]);
                ends == (a, b) || ends == (b, a)
            })
            .collect()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.regions[a].neighbors.contains(&b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Horizon, Line, PowerCase};

    fn topology(ids: &[&str], edges: &[(&str, &str)]) -> PowerCase {
        let buses: Vec<Bus> = ids.iter().map(|id| Bus { id: id.to_string() }).collect();
        let pos = |id: &str| ids.iter().position(|b| *b == id).unwrap();
        PowerCase {
            name: "t".into(),
            base_mva: 100.0,
            reference_bus: 0,
            lines: edges
                .iter()
                .map(|(u, v)| Line { from: pos(u), to: pos(v), gamma: 10.0, capacity_mw: 100.0 })
                .collect(),
            demand: vec![vec![0.0; 2]; buses.len()],
            buses,
            generators: Vec::new(),
            horizon: Horizon { hours: 2, window_hours: 1 },
            maintenance: Vec::new(),
        }
    }

    fn names(case: &PowerCase, v: &[usize]) -> Vec<String> {
        v.iter().map(|&b| case.buses[b].id.clone()).collect()
    }

    #[test]
    fn two_bus_minimal_cut() {
        let case = topology(&["a", "b"], &[("a", "b")]);
        let p = RegionPartition::from_labels(&case, &[1, 2]).unwrap();
        for r in p.regions() {
            assert_eq!(r.boundary.len(), 1);
            assert_eq!(r.foreign.len(), 1);
            assert!(r.internal.is_empty());
            assert_eq!(r.tie_lines, vec![0]);
        }
        assert_eq!(p.region(0).neighbors, vec![1]);
    }

    #[test]
    fn single_region_has_no_coupling() {
        let case = topology(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let p = RegionPartition::single(&case);
        let r = p.region(0);
        assert!(r.boundary.is_empty() && r.foreign.is_empty() && r.neighbors.is_empty());
        assert_eq!(r.internal, vec![0, 1, 2]);
        assert_eq!(r.internal_lines, vec![0, 1]);
    }

    #[test]
    fn uncovered_and_empty_regions_are_rejected() {
        let case = topology(&["a", "b"], &[("a", "b")]);
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), 1);
        assert_eq!(
            RegionPartition::from_map(&case, &map),
            Err(GridError::UncoveredBus("b".into()))
        );
        map.insert("b".to_string(), 3);
        assert_eq!(RegionPartition::from_map(&case, &map), Err(GridError::EmptyRegion(2)));
    }

    #[test]
    fn per_bus_neighborhoods() {
        let case = topology(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("b", "d")]);
        let p = RegionPartition::from_labels(&case, &[1, 1, 2, 3]).unwrap();
        assert_eq!(names(&case, &p.foreign_of(&case, 1)), vec!["c", "d"]);
        assert_eq!(names(&case, &p.internal_neighbors_of(&case, 1)), vec!["a"]);
        assert_eq!(p.neighbor_regions_of(&case, 1), vec![1, 2]);
        assert_eq!(p.shared_tie_lines(&case, 0, 2), vec![2]);
        assert!(!p.are_neighbors(1, 2));
    }
}
