//! Indexed binary min-heap holding at most one key per site.

const ABSENT: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub(crate) struct SiteQueue {
    heap: Vec<(u128, u32)>,
    pos: Vec<u32>,
}

impl SiteQueue {
    pub fn new(sites: usize) -> Self {
        Self {
            heap: Vec::with_capacity(sites),
            pos: vec![ABSENT; sites],
        }
    }

    #[inline]
    pub fn peek(&self) -> Option<u128> {
        self.heap.first().map(|e| e.0)
    }

    /// Sets the key of `site`; `None` removes it.
    pub fn set(&mut self, site: u32, key: Option<u128>) {
        let p = self.pos[site as usize];
        match (p == ABSENT, key) {
            (true, None) => {}
            (true, Some(k)) => {
                self.heap.push((k, site));
                let i = self.heap.len() - 1;
                self.pos[site as usize] = i as u32;
                self.sift_up(i);
            }
            (false, Some(k)) => {
                let i = p as usize;
                let old = self.heap[i].0;
                self.heap[i].0 = k;
                if k < old {
                    self.sift_up(i);
                } else {
                    self.sift_down(i);
                }
            }
            (false, None) => {
                let i = p as usize;
                self.pos[site as usize] = ABSENT;
                let last = self.heap.pop().expect("site is queued");
                if i < self.heap.len() {
                    let old = self.heap[i].0;
                    self.heap[i] = last;
                    self.pos[last.1 as usize] = i as u32;
                    if last.0 < old {
                        self.sift_up(i);
                    } else {
                        self.sift_down(i);
                    }
                }
            }
        }
    }

    fn sift_up(&mut self, mut i: usize) {
        let e = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[parent].0 <= e.0 {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.pos[self.heap[i].1 as usize] = i as u32;
            i = parent;
        }
        self.heap[i] = e;
        self.pos[e.1 as usize] = i as u32;
    }

    fn sift_down(&mut self, mut i: usize) {
        let e = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let c = if l + 1 < n && self.heap[l + 1].0 < self.heap[l].0 {
                l + 1
            } else {
                l
            };
            if self.heap[c].0 >= e.0 {
                break;
            }
            self.heap[i] = self.heap[c];
            self.pos[self.heap[i].1 as usize] = i as u32;
            i = c;
        }
        self.heap[i] = e;
        self.pos[e.1 as usize] = i as u32;
    }
}
