//! Static space-time schedule of the tiled kernel's main loop.
//!
//! Per tile, slice `k` is de-quantized (shared-memory load + SIMT cast) in
//! one step and multiplied on the tensor cores in the next, while slice
//! `k + 1` is de-quantized. The next tile's global-to-shared copy is issued
//! asynchronously with the first slice; a barrier at the end of `k = 2`
//! makes it visible before the next tile's first de-quantization, which
//! overlaps the last mma of the current tile. Nothing here runs
//! concurrently; the trace only records when each stage would issue.

use std::fmt::{self, Write as _};

use crate::error::{FpxError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    CopyAsync,
    DequantLds,
    Mma,
    Barrier,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::CopyAsync => "copy-async",
            Engine::DequantLds => "dequant+lds",
            Engine::Mma => "mma",
            Engine::Barrier => "barrier",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineEvent {
    pub step: usize,
    pub engine: Engine,
    pub tile: usize,
    /// `None` for copies and barriers, which cover a whole tile.
    pub slice: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineTrace {
    pub tiles: usize,
    pub slices: usize,
    pub events: Vec<PipelineEvent>,
}

/// Build and validate the schedule for `tiles` tiles of `slices` slices.
pub fn pipeline_schedule(tiles: usize, slices: usize) -> Result<PipelineTrace> {
    if slices < 2 {
        return Err(FpxError::TraceViolation(format!("need at least 2 slices, got {slices}")));
    }
    let mut events = Vec::new();
    if tiles > 0 {
        events.push(PipelineEvent { step: 0, engine: Engine::CopyAsync, tile: 0, slice: None });
        events.push(PipelineEvent { step: 0, engine: Engine::Barrier, tile: 0, slice: None });
    }
    for tile in 0..tiles {
        let base = 1 + tile * slices;
        let has_next = tile + 1 < tiles;
        if has_next {
            events.push(PipelineEvent { step: base, engine: Engine::CopyAsync, tile: tile + 1, slice: None });
        }
        for k in 0..slices {
            events.push(PipelineEvent { step: base + k, engine: Engine::DequantLds, tile, slice: Some(k) });
            events.push(PipelineEvent { step: base + k + 1, engine: Engine::Mma, tile, slice: Some(k) });
        }
        if has_next {
            // End of k = slices - 2: the step running mma(k) and dequant(k + 1).
            events.push(PipelineEvent {
                step: base + slices - 1,
                engine: Engine::Barrier,
                tile: tile + 1,
                slice: None,
            });
        }
    }
    events.sort_by_key(|e| (e.step, e.engine));
    let trace = PipelineTrace { tiles, slices, events };
    trace.validate()?;
    Ok(trace)
}

impl PipelineTrace {
    fn find(&self, engine: Engine, tile: usize, slice: Option<usize>) -> Result<&PipelineEvent> {
        let mut it = self.events.iter().filter(|e| e.engine == engine && e.tile == tile && e.slice == slice);
        let first = it.next().ok_or_else(|| {
            FpxError::TraceViolation(format!("missing {engine} for tile {tile} slice {slice:?}"))
        })?;
        if it.next().is_some() {
            return Err(FpxError::TraceViolation(format!("duplicate {engine} for tile {tile} slice {slice:?}")));
        }
        Ok(first)
    }

    /// Check the dependency and overlap structure.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FpxError::TraceViolation(m));
        if self.events.windows(2).any(|w| (w[0].step, w[0].engine) > (w[1].step, w[1].engine)) {
            return bad("events out of order".into());
        }
        if self.events.windows(2).any(|w| (w[0].step, w[0].engine) == (w[1].step, w[1].engine) && w[0].engine != Engine::Barrier) {
            return bad("an engine is issued twice in one step".into());
        }
        if self.tiles == 0 {
            return if self.events.is_empty() { Ok(()) } else { bad("events for zero tiles".into()) };
        }
        let count = |engine| self.events.iter().filter(|e| e.engine == engine).count();
        let expected = self.tiles * self.slices;
        if count(Engine::DequantLds) != expected || count(Engine::Mma) != expected {
            return bad(format!("expected {expected} dequant and mma events"));
        }
        for tile in 0..self.tiles {
            for k in 0..self.slices {
                let dq = self.find(Engine::DequantLds, tile, Some(k))?;
                let mma = self.find(Engine::Mma, tile, Some(k))?;
                if mma.step <= dq.step {
                    return bad(format!("mma({tile},{k}) not after its dequant"));
                }
                let next_dq = if k + 1 < self.slices {
                    Some(self.find(Engine::DequantLds, tile, Some(k + 1))?)
                } else if tile + 1 < self.tiles {
                    Some(self.find(Engine::DequantLds, tile + 1, Some(0))?)
                } else {
                    None
                };
                if let Some(nd) = next_dq {
                    if nd.step != mma.step {
                        return bad(format!("mma({tile},{k}) not co-scheduled with the next dequant"));
                    }
                }
            }
            let barrier = self.find(Engine::Barrier, tile, None)?;
            let copy = self.find(Engine::CopyAsync, tile, None)?;
            let first_dq = self.find(Engine::DequantLds, tile, Some(0))?;
            if !(copy.step <= barrier.step && barrier.step < first_dq.step) {
                return bad(format!("tile {tile}: copy/barrier do not precede its first dequant"));
            }
            if tile > 0 {
                let end_k = self.find(Engine::Mma, tile - 1, Some(self.slices - 2))?;
                if barrier.step != end_k.step {
                    return bad(format!("tile {tile}: barrier not at the end of k = {}", self.slices - 2));
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.events.last().map_or(0, |e| e.step + 1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,engine,tile,slice\n");
        for e in &self.events {
            let slice = e.slice.map_or(String::new(), |k| k.to_string());
            let _ = writeln!(s, "{},{},{},{}", e.step, e.engine, e.tile, slice);
        }
        s
    }

    /// One line per step, one column per engine.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:>5}  {:<10} {:<12} {:<10} {}\n", "step", "copy-async", "dequant+lds", "mma", "barrier");
        for step in 0..self.steps() {
            let cell = |engine| {
                self.events
                    .iter()
                    .filter(|e| e.step == step && e.engine == engine)
                    .map(|e| match e.slice {
                        Some(k) => format!("T{}.k{}", e.tile, k),
                        None => format!("T{}", e.tile),
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                s,
                "{:>5}  {:<10} {:<12} {:<10} {}",
                step,
                cell(Engine::CopyAsync),
                cell(Engine::DequantLds),
                cell(Engine::Mma),
                cell(Engine::Barrier)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty() {
        let t = pipeline_schedule(0, 4).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.to_csv(), "step,engine,tile,slice\n");
    }

    #[test]
    fn one_tile() {
        let t = pipeline_schedule(1, 4).unwrap();
        let of = |eng| t.events.iter().filter(|e| e.engine == eng).collect::<Vec<_>>();
        assert_eq!(of(Engine::DequantLds).len(), 4);
        assert_eq!(of(Engine::Mma).len(), 4);
        for k in 0..3 {
            let m = t.find(Engine::Mma, 0, Some(k)).unwrap();
            let d = t.find(Engine::DequantLds, 0, Some(k + 1)).unwrap();
            assert_eq!(m.step, d.step);
        }
    }

    #[test]
    fn two_tiles_barrier_after_k2() {
        let t = pipeline_schedule(2, 4).unwrap();
        let b = t.find(Engine::Barrier, 1, None).unwrap();
        assert_eq!(b.step, t.find(Engine::Mma, 0, Some(2)).unwrap().step);
        assert_eq!(b.step, t.find(Engine::DequantLds, 0, Some(3)).unwrap().step);
        assert!(b.step < t.find(Engine::DequantLds, 1, Some(0)).unwrap().step);
        assert_eq!(
            t.find(Engine::DequantLds, 1, Some(0)).unwrap().step,
            t.find(Engine::Mma, 0, Some(3)).unwrap().step
        );
    }

    #[test]
    fn validator_catches_broken_traces() {
        let good = pipeline_schedule(3, 4).unwrap();
        let mut t = good.clone();
        let i = t.events.iter().position(|e| e.engine == Engine::Barrier && e.tile == 2).unwrap();
        t.events.remove(i);
        assert!(t.validate().is_err());

        let mut t = good.clone();
        for e in t.events.iter_mut().filter(|e| e.engine == Engine::Barrier && e.tile == 1) {
            e.step += 1;
        }
        t.events.sort_by_key(|e| (e.step, e.engine));
        assert!(t.validate().is_err());

        let mut t = good;
        for e in t.events.iter_mut().filter(|e| e.engine == Engine::Mma && e.tile == 0 && e.slice == Some(1)) {
            e.step -= 1;
        }
        t.events.sort_by_key(|e| (e.step, e.engine));
        assert!(t.validate().is_err());
        assert!(pipeline_schedule(1, 1).is_err());
    }

    #[test]
    fn renders() {
        let t = pipeline_schedule(2, 4).unwrap();
        assert!(t.to_csv().lines().any(|l| l == "4,barrier,1,"));
        assert!(t.to_text().contains("T0.k3"));
    }
}
