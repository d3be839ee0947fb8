//! Starts one worker thread per configured feed.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::config::AppConfig;
use crate::feed::{run_feed, FeedHandle, FeedSettings, FeedSummary};

pub struct Pipeline {
    feeds: Vec<(Arc<FeedHandle>, FeedSettings)>,
}

impl Pipeline {
    pub fn new(cfg: &AppConfig) -> Self {
        Self {
            feeds: cfg
                .feeds
                .iter()
                .map(|f| (FeedHandle::new(f.clone()), FeedSettings::for_feed(cfg, f)))
                .collect(),
        }
    }

    pub fn handles(&self) -> BTreeMap<String, Arc<FeedHandle>> {
        self.feeds
            .iter()
            .map(|(h, _)| (h.id().to_string(), Arc::clone(h)))
            .collect()
    }

    /// Starts every feed. A feed that faults records it in its status and
    /// leaves the others running.
    pub fn spawn(&self) -> Vec<JoinHandle<()>> {
        self.feeds
            .iter()
            .map(|(h, s)| {
                let (h, s) = (Arc::clone(h), s.clone());
                thread::Builder::new()
                    .name(format!("feed-{}", h.id()))
                    .spawn(move || {
                        let _ = run_feed(&h, &s);
                    })
                    .expect("spawn feed worker")
            })
            .collect()
    }

    /// Runs all feeds to completion.
    pub fn run(&self) -> Vec<FeedSummary> {
        for worker in self.spawn() {
            let _ = worker.join();
        }
        self.feeds.iter().map(|(h, _)| h.summary()).collect()
    }
}
