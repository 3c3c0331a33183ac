use serde::{Deserialize, Serialize};

use super::config::ScheduleConfig;
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Training,
    Break,
    Session,
}

/// Window in which one main build may be worked on; work stops at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildSlot {
    pub build: usize,
    pub start: f64,
    pub end: f64,
    /// False for the training build.
    pub metric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBlock {
    pub kind: BlockKind,
    pub start: f64,
    pub end: f64,
    pub slots: Vec<BuildSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSchedule {
    pub blocks: Vec<ScheduleBlock>,
    pub long_first: bool,
}

fn slots(start: f64, len: f64, builds: u32, pause: f64, first: usize, metric: bool) -> Vec<BuildSlot> {
    let n = f64::from(builds);
    let slot = (len - pause * (n - 1.0)) / n;
    (0..builds as usize)
        .map(|i| {
            let s = start + i as f64 * (slot + pause);
            BuildSlot { build: first + i, start: s, end: s + slot, metric }
        })
        .collect()
}

impl TrialSchedule {
    /// Training, break, session, break, session.
    pub fn build(cfg: &ScheduleConfig, long_first: bool) -> Result<Self, SimError> {
        let mut blocks = Vec::new();
        let mut t = 0.0;
        let mut next_build = 0;
        let mut push = |kind: BlockKind, len: f64, builds: u32, t: &mut f64, next: &mut usize| {
            let s = if builds == 0 {
                Vec::new()
            } else {
                slots(*t, len, builds, cfg.inter_build_break_s, *next, kind == BlockKind::Session)
            };
            *next += builds as usize;
            blocks.push(ScheduleBlock { kind, start: *t, end: *t + len, slots: s });
            *t += len;
        };
        let (a, b) = if long_first {
            (cfg.long_session_s, cfg.short_session_s)
        } else {
            (cfg.short_session_s, cfg.long_session_s)
        };
        push(BlockKind::Training, cfg.training_s, cfg.training_builds, &mut t, &mut next_build);
        push(BlockKind::Break, cfg.break_s, 0, &mut t, &mut next_build);
        push(BlockKind::Session, a, cfg.session_builds, &mut t, &mut next_build);
        push(BlockKind::Break, cfg.break_s, 0, &mut t, &mut next_build);
        push(BlockKind::Session, b, cfg.session_builds, &mut t, &mut next_build);
        let schedule = Self { blocks, long_first };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut t = 0.0;
        for b in &self.blocks {
            if b.start < t - 1e-9 || b.end <= b.start {
                return Err(SimError::Config("schedule blocks must be ordered and non-empty".into()));
            }
            for s in &b.slots {
                if s.start < b.start - 1e-9 || s.end > b.end + 1e-9 || s.end <= s.start {
                    return Err(SimError::Config("build slots must be non-empty and inside their block".into()));
                }
            }
            t = b.end;
        }
        let kinds: Vec<BlockKind> = self.blocks.iter().map(|b| b.kind).collect();
        if kinds.iter().filter(|k| **k == BlockKind::Training).count() != 1 || kinds.first() != Some(&BlockKind::Training) {
            return Err(SimError::Config("a trial starts with exactly one training session".into()));
        }
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.blocks.last().map_or(0.0, |b| b.end)
    }

    /// Start of the span that counts toward metrics (after training).
    pub fn metric_start(&self) -> f64 {
        self.blocks.iter().find(|b| b.kind == BlockKind::Training).map_or(0.0, |b| b.end)
    }

    pub fn slots(&self) -> impl Iterator<Item = &BuildSlot> {
        self.blocks.iter().flat_map(|b| b.slots.iter())
    }

    pub fn metric_builds(&self) -> usize {
        self.slots().filter(|s| s.metric).count()
    }

    pub fn block_at(&self, t: f64) -> Option<&ScheduleBlock> {
        self.blocks.iter().find(|b| b.start <= t && t < b.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let s = TrialSchedule::build(&ScheduleConfig::default(), true).unwrap();
        let kinds: Vec<BlockKind> = s.blocks.iter().map(|b| b.kind).collect();
        use BlockKind::*;
        assert_eq!(kinds, [Training, Break, Session, Break, Session]);
        assert_eq!(s.metric_builds(), 4);
        assert_eq!(s.blocks[2].end - s.blocks[2].start, 900.0);
        assert_eq!(s.blocks[4].end - s.blocks[4].start, 540.0);
        let flipped = TrialSchedule::build(&ScheduleConfig::default(), false).unwrap();
        assert_eq!(flipped.blocks[2].end - flipped.blocks[2].start, 540.0);
        assert_eq!(s.end(), flipped.end());
        let sl: Vec<&BuildSlot> = s.blocks[2].slots.iter().collect();
        assert_eq!((sl[0].end - sl[0].start, sl[1].start - sl[0].end), (420.0, 60.0));
    }
}
