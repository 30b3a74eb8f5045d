use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Sliding-window limiter: at most `per_second` dispatches in any one-second
/// window. Callers block in [`RateLimiter::acquire`] until a slot frees up.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: usize,
    window: Duration,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(per_second: usize) -> Self {
        assert!(per_second > 0, "rate limit must be positive");
        Self {
            per_second,
            window: Duration::from_secs(1),
            sent: Mutex::new(VecDeque::with_capacity(per_second)),
        }
    }

    pub fn per_second(&self) -> usize {
        self.per_second
    }

    /// Blocks until a dispatch is allowed and returns its timestamp.
    pub fn acquire(&self) -> Instant {
        loop {
            let wait = {
                let mut sent = self.sent.lock().expect("rate limiter lock");
                let now = Instant::now();
                while sent
                    .front()
                    .is_some_and(|t| now.duration_since(*t) >= self.window)
                {
                    sent.pop_front();
                }
                if sent.len() < self.per_second {
                    sent.push_back(now);
                    return now;
                }
                self.window - now.duration_since(*sent.front().expect("non-empty"))
            };
            std::thread::sleep(wait);
        }
    }
}
