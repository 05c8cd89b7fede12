use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use tokio::sync::Notify;

/// Bounded FIFO that discards its oldest entry when full. One consumer.
#[derive(Debug)]
pub struct DropOldest<T> {
    depth: usize,
    items: Mutex<State<T>>,
    ready: Notify,
    evicted: AtomicU64,
}

#[derive(Debug)]
struct State<T> {
    queue: VecDeque<T>,
    closed: bool,
}

impl<T> DropOldest<T> {
    pub fn new(depth: usize) -> Self {
        assert!(depth > 0, "queue depth must be positive");
        Self {
            depth,
            items: Mutex::new(State {
                queue: VecDeque::with_capacity(depth),
                closed: false,
            }),
            ready: Notify::new(),
            evicted: AtomicU64::new(0),
        }
    }

    /// Returns false if the queue has been closed.
    pub fn push(&self, item: T) -> bool {
        {
            let mut s = self.items.lock();
            if s.closed {
                return false;
            }
            if s.queue.len() == self.depth {
                s.queue.pop_front();
                self.evicted.fetch_add(1, Ordering::Relaxed);
            }
            s.queue.push_back(item);
        }
        self.ready.notify_one();
        true
    }

    pub fn try_pop(&self) -> Option<T> {
        self.items.lock().queue.pop_front()
    }

    /// Waits for the next item. `None` once closed and drained.
    pub async fn pop(&self) -> Option<T> {
        loop {
            {
                let mut s = self.items.lock();
                if let Some(item) = s.queue.pop_front() {
                    return Some(item);
                }
                if s.closed {
                    return None;
                }
            }
            self.ready.notified().await;
        }
    }

    pub fn close(&self) {
        self.items.lock().closed = true;
        self.ready.notify_one();
    }

    pub fn len(&self) -> usize {
        self.items.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries discarded to make room.
    pub fn evicted(&self) -> u64 {
        self.evicted.load(Ordering::Relaxed)
    }
}
