//! Small LRU of attenuation buffers with atomic get-or-build per key.

use std::collections::VecDeque;
use std::future::Future;
use std::sync::{Arc, Mutex};

use slicecast::AttenuationBuffer;
use tokio::sync::OnceCell;

/// Everything a buffer depends on, compared bit for bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BufferKey {
    pub dataset: String,
    /// Transfer-function control points as raw bits.
    pub transfer: Vec<u64>,
    pub light_dir: [u64; 3],
    pub light_color: [u64; 3],
    pub n_slices: usize,
    pub resolution: [usize; 2],
    pub compensation: u64,
    pub reference_spacing: u64,
}

type Slot = Arc<OnceCell<Arc<AttenuationBuffer>>>;

pub struct BufferCache {
    capacity: usize,
    /// Most recently used at the front.
    entries: Mutex<VecDeque<(BufferKey, Slot)>>,
}

impl BufferCache {
    pub fn new(capacity: usize) -> Self {
        BufferCache {
            capacity: capacity.max(1),
            entries: Mutex::new(VecDeque::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slot(&self, key: &BufferKey) -> Slot {
        let mut entries = self.entries.lock().unwrap();
        if let Some(pos) = entries.iter().position(|(k, _)| k == key) {
            let entry = entries.remove(pos).unwrap();
            let slot = entry.1.clone();
            entries.push_front(entry);
            return slot;
        }
        let slot = Slot::default();
        entries.push_front((key.clone(), slot.clone()));
        entries.truncate(self.capacity);
        slot
    }

    /// Returns the cached buffer or runs `build`. Concurrent callers with
    /// the same key share one build. The flag is true when this call built.
    pub async fn get_or_build<F, Fut, E>(&self, key: &BufferKey, build: F) -> Result<(Arc<AttenuationBuffer>, bool), E>
    where
        F: FnOnce() -> Fut,
        Fut: Future<Output = Result<AttenuationBuffer, E>>,
    {
        let slot = self.slot(key);
        let mut built = false;
        let buffer = slot
            .get_or_try_init(|| async {
                built = true;
                build().await.map(Arc::new)
            })
            .await?
            .clone();
        Ok((buffer, built))
    }
}
