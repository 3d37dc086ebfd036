//! Time-series knowledge base: rolling (K, V) slices of history and top-N
//! retrieval by DTW on raw K segments or Euclidean distance on embeddings.

use std::io::{Read, Write};

use crate::dtw::dtw_cost_unchecked;
use crate::error::{Error, Result};
use crate::exec::Execution;

const SNAPSHOT_MAGIC: &[u8; 5] = b"TSKB1";

/// One rolling-window slice. The K segment is the leading `k_len` values of V.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeEntry {
    pub start_index: usize,
    v_segment: Vec<f64>,
    k_len: usize,
    embedding: Option<Vec<f64>>,
}

impl KnowledgeEntry {
    pub fn k_segment(&self) -> &[f64] {
        &self.v_segment[..self.k_len]
    }

    pub fn v_segment(&self) -> &[f64] {
        &self.v_segment
    }

    pub fn embedding(&self) -> Option<&[f64]> {
        self.embedding.as_deref()
    }

    /// One past the last source position covered by V.
    pub fn end_index(&self) -> usize {
        self.start_index + self.v_segment.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingState {
    Raw,
    Indexed,
}

/// How retrieval distances are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    Dtw,
    Embedding,
}

impl RetrievalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Dtw => "dtw",
            RetrievalMode::Embedding => "embedding",
        }
    }
}

impl std::str::FromStr for RetrievalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dtw" => Ok(RetrievalMode::Dtw),
            "embedding" => Ok(RetrievalMode::Embedding),
            other => Err(Error::Config(format!("unknown retrieval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieved {
    /// Position in [`KnowledgeBase::entries`].
    pub entry: usize,
    pub start_index: usize,
    pub distance: f64,
}

/// Ranked hits, nearest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalResult {
    pub ranked: Vec<Retrieved>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn start_indices(&self) -> Vec<usize> {
        self.ranked.iter().map(|r| r.start_index).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
    l_v: usize,
    l_r: usize,
    stride: usize,
    state: EmbeddingState,
}

impl KnowledgeBase {
    /// Slices `series` with windows of length `l_v` every `stride` positions.
    pub fn build(series: &[f64], l_v: usize, l_r: usize, stride: usize) -> Result<Self> {
        if l_r == 0 || stride == 0 {
            return Err(Error::Config("L_r and S must be positive".into()));
        }
        if l_r > l_v {
            return Err(Error::Config(format!("L_r={l_r} exceeds L_v={l_v}")));
        }
        if l_v > series.len() {
            return Err(Error::Config(format!(
                "L_v={l_v} exceeds series length {}",
                series.len()
            )));
        }
        let entries = (0..=series.len() - l_v)
            .step_by(stride)
            .map(|start| KnowledgeEntry {
                start_index: start,
                v_segment: series[start..start + l_v].to_vec(),
                k_len: l_r,
                embedding: None,
            })
            .collect();
        Ok(KnowledgeBase {
            entries,
            l_v,
            l_r,
            stride,
            state: EmbeddingState::Raw,
        })
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l_v(&self) -> usize {
        self.l_v
    }

    pub fn l_r(&self) -> usize {
        self.l_r
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn state(&self) -> EmbeddingState {
        self.state
    }

    pub fn embedding_width(&self) -> usize {
        self.entries
            .first()
            .and_then(|e| e.embedding.as_ref())
            .map_or(0, Vec::len)
    }

    /// Number of leading entries whose V ends at or before `exclude_from`.
    /// Entries are sorted by start, so eligibility is a prefix.
    pub fn eligible_count(&self, exclude_from: usize) -> usize {
        if exclude_from < self.l_v {
            return 0;
        }
        let last_start = exclude_from - self.l_v;
        (last_start / self.stride + 1).min(self.entries.len())
    }

    pub fn retrieve_dtw(
        &self,
        query: &[f64],
        n: usize,
        exclude_from: usize,
    ) -> Result<RetrievalResult> {
        self.retrieve_dtw_with(Execution::Sequential, query, n, exclude_from)
    }

    pub fn retrieve_dtw_with(
        &self,
        exec: Execution,
        query: &[f64],
        n: usize,
        exclude_from: usize,
    ) -> Result<RetrievalResult> {
        if query.len() != self.l_r {
            return Err(Error::dim("retrieve_dtw", &[query.len()], &[self.l_r]));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("retrieval query must be finite".into()));
        }
        let eligible = &self.entries[..self.eligible_count(exclude_from)];
        let distances = exec.map(eligible, |e| dtw_cost_unchecked(query, e.k_segment()));
        Ok(rank(eligible, distances, n))
    }

    pub fn retrieve_embedding(
        &self,
        query: &[f64],
        n: usize,
        exclude_from: usize,
    ) -> Result<RetrievalResult> {
        self.retrieve_embedding_with(Execution::Sequential, query, n, exclude_from)
    }

    pub fn retrieve_embedding_with(
        &self,
        exec: Execution,
        query: &[f64],
        n: usize,
        exclude_from: usize,
    ) -> Result<RetrievalResult> {
        if self.state != EmbeddingState::Indexed {
            return Err(Error::State(
                "knowledge base has no embeddings; reindex before embedding retrieval".into(),
            ));
        }
        let width = self.embedding_width();
        if query.len() != width {
            return Err(Error::dim("retrieve_embedding", &[query.len()], &[width]));
        }
        let eligible = &self.entries[..self.eligible_count(exclude_from)];
        let distances = exec.map(eligible, |e| {
            let emb = e.embedding.as_deref().expect("indexed");
            emb.iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        });
        Ok(rank(eligible, distances, n))
    }

    /// Recomputes every entry's embedding. On failure nothing is modified.
    pub fn reindex_embeddings<F>(&mut self, embed: F) -> Result<()>
    where
        F: FnMut(&KnowledgeEntry) -> Result<Vec<f64>>,
    {
        let fresh = self.entries.iter().map(embed).collect::<Result<Vec<_>>>()?;
        self.install(fresh)
    }

    /// Parallel-capable variant of [`Self::reindex_embeddings`].
    pub fn reindex_embeddings_with<F>(&mut self, exec: Execution, embed: F) -> Result<()>
    where
        F: Fn(&KnowledgeEntry) -> Result<Vec<f64>> + Sync + Send,
    {
        let fresh = exec
            .map(&self.entries, embed)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.install(fresh)
    }

    fn install(&mut self, fresh: Vec<Vec<f64>>) -> Result<()> {
        if let Some(first) = fresh.first() {
            let width = first.len();
            if width == 0 || fresh.iter().any(|e| e.len() != width) {
                return Err(Error::Argument(
                    "embeddings must be non-empty and share one width".into(),
                ));
            }
        }
        for (entry, emb) in self.entries.iter_mut().zip(fresh) {
            entry.embedding = Some(emb);
        }
        self.state = EmbeddingState::Indexed;
        Ok(())
    }

    /// Flat binary snapshot: `TSKB1`, then `L_v, L_r, S, count, width` as
    /// little-endian `u32`, then per entry the start index (`u32`) followed
    /// by V and the embedding as little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let width = self.embedding_width();
        w.write_all(SNAPSHOT_MAGIC)?;
        for v in [self.l_v, self.l_r, self.stride, self.entries.len(), width] {
            w.write_all(&to_u32(v)?.to_le_bytes())?;
        }
        for e in &self.entries {
            w.write_all(&to_u32(e.start_index)?.to_le_bytes())?;
            for v in &e.v_segment {
                w.write_all(&v.to_le_bytes())?;
            }
            if let Some(emb) = &e.embedding {
                for v in emb {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::format("snapshot", "bad magic"));
        }
        let mut header = [0usize; 5];
        for h in &mut header {
            *h = read_u32(&mut r)? as usize;
        }
        let [l_v, l_r, stride, count, width] = header;
        if l_r == 0 || l_r > l_v || stride == 0 {
            return Err(Error::format("snapshot", "inconsistent header"));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let start_index = read_u32(&mut r)? as usize;
            let v_segment = read_f64s(&mut r, l_v)?;
            let embedding = if width > 0 {
                Some(read_f64s(&mut r, width)?)
            } else {
                None
            };
            entries.push(KnowledgeEntry {
                start_index,
                v_segment,
                k_len: l_r,
                embedding,
            });
        }
        let state = if width > 0 {
            EmbeddingState::Indexed
        } else {
            EmbeddingState::Raw
        };
        Ok(KnowledgeBase {
            entries,
            l_v,
            l_r,
            stride,
            state,
        })
    }
}

fn rank(eligible: &[KnowledgeEntry], distances: Vec<f64>, n: usize) -> RetrievalResult {
    let mut hits: Vec<Retrieved> = eligible
        .iter()
        .zip(distances)
        .enumerate()
        .map(|(i, (e, d))| Retrieved {
            entry: i,
            start_index: e.start_index,
            distance: d,
        })
        .collect();
    let by_distance = |a: &Retrieved, b: &Retrieved| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.start_index.cmp(&b.start_index))
    };
    if hits.len() > n && n > 0 {
        hits.select_nth_unstable_by(n - 1, by_distance);
    }
    hits.truncate(n);
    hits.sort_by(by_distance);
    RetrievalResult { ranked: hits }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format("snapshot", format!("{v} exceeds u32")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::oracle::exhaustive;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn entry_counts() {
        let kb = KnowledgeBase::build(&ramp(100), 21, 14, 1).unwrap();
        assert_eq!(kb.len(), 80);
        let kb = KnowledgeBase::build(&ramp(21), 21, 14, 1).unwrap();
        assert_eq!(kb.len(), 1);
        assert_eq!(kb.entries()[0].v_segment(), ramp(21).as_slice());
        let kb = KnowledgeBase::build(&ramp(100), 21, 14, 3).unwrap();
        assert_eq!(kb.len(), (100 - 21) / 3 + 1);
        for w in kb.entries().windows(2) {
            assert_eq!(w[1].start_index - w[0].start_index, 3);
        }
    }

    #[test]
    fn k_is_prefix_of_v() {
        let kb = KnowledgeBase::build(&ramp(60), 21, 14, 1).unwrap();
        for e in kb.entries() {
            assert_eq!(e.k_segment(), &e.v_segment()[..14]);
            assert!(e.start_index + 21 <= 60);
        }
    }

    #[test]
    fn bad_geometry_is_a_config_error() {
        assert!(matches!(
            KnowledgeBase::build(&ramp(50), 10, 14, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            KnowledgeBase::build(&ramp(5), 10, 4, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            KnowledgeBase::build(&ramp(50), 10, 4, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dtw_self_match_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let series: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kb = KnowledgeBase::build(&series, 6, 4, 1).unwrap();
        let target = &kb.entries()[17];
        let res = kb.retrieve_dtw(target.k_segment(), 3, 80).unwrap();
        assert_eq!(res.ranked[0].start_index, 17);
        assert_eq!(res.ranked[0].distance, 0.0);
    }

    #[test]
    fn everything_excluded_gives_empty_result() {
        let kb = KnowledgeBase::build(&ramp(40), 6, 4, 1).unwrap();
        assert!(kb.retrieve_dtw(&[0.0; 4], 3, 0).unwrap().is_empty());
        assert!(kb.retrieve_dtw(&[0.0; 4], 3, 5).unwrap().is_empty());
        assert_eq!(kb.retrieve_dtw(&[0.0; 4], 3, 6).unwrap().len(), 1);
    }

    #[test]
    fn exclusion_drops_overlapping_windows() {
        let kb = KnowledgeBase::build(&ramp(50), 6, 4, 1).unwrap();
        for t in 0..=50 {
            let res = kb.retrieve_dtw(&[1.0, 2.0, 3.0, 4.0], 100, t).unwrap();
            assert_eq!(res.len(), (t + 1).saturating_sub(6));
            assert!(res.ranked.iter().all(|r| r.start_index + 6 <= t));
        }
    }

    #[test]
    fn embedding_retrieval_requires_index() {
        let kb = KnowledgeBase::build(&ramp(30), 6, 4, 1).unwrap();
        assert!(matches!(
            kb.retrieve_embedding(&[0.0; 4], 1, 30),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn embedding_distances_three_four_five() {
        let mut kb = KnowledgeBase::build(&[0.0, 0.0, 3.0, 4.0], 2, 2, 2).unwrap();
        kb.reindex_embeddings(|e| Ok(e.k_segment().to_vec()))
            .unwrap();
        let res = kb.retrieve_embedding(&[0.0, 0.0], 2, 4).unwrap();
        assert_eq!(res.start_indices(), vec![0, 2]);
        assert_eq!(res.ranked[0].distance, 0.0);
        assert_eq!(res.ranked[1].distance, 5.0);
    }

    #[test]
    fn identity_embedding_and_determinism() {
        let series = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0];
        let mut kb = KnowledgeBase::build(&series, 3, 2, 1).unwrap();
        kb.reindex_embeddings(|e| Ok(e.k_segment().to_vec()))
            .unwrap();
        assert_eq!(kb.state(), EmbeddingState::Indexed);
        for e in kb.entries() {
            assert_eq!(e.embedding().unwrap(), e.k_segment());
        }
        assert_eq!(kb.entries()[0].embedding(), kb.entries()[2].embedding());
    }

    #[test]
    fn failed_reindex_leaves_state_unchanged() {
        let mut kb = KnowledgeBase::build(&ramp(30), 6, 4, 1).unwrap();
        let before = kb.clone();
        let r = kb.reindex_embeddings(|e| {
            if e.start_index == 10 {
                Err(Error::Argument("boom".into()))
            } else {
                Ok(vec![1.0])
            }
        });
        assert!(r.is_err());
        assert_eq!(kb, before);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let series: Vec<f64> = (0..50).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect();
        let mut kb = KnowledgeBase::build(&series, 7, 3, 2).unwrap();
        let mut raw = Vec::new();
        kb.write_snapshot(&mut raw).unwrap();
        assert_eq!(&raw[..5], b"TSKB1");
        assert_eq!(KnowledgeBase::read_snapshot(raw.as_slice()).unwrap(), kb);

        kb.reindex_embeddings(|e| Ok(e.k_segment().iter().map(|v| v.sin()).collect()))
            .unwrap();
        let mut raw = Vec::new();
        kb.write_snapshot(&mut raw).unwrap();
        assert_eq!(raw.len(), 5 + 20 + kb.len() * (4 + 8 * 7 + 8 * 3));
        let back = KnowledgeBase::read_snapshot(raw.as_slice()).unwrap();
        assert_eq!(back, kb);
        let mut again = Vec::new();
        back.write_snapshot(&mut again).unwrap();
        assert_eq!(raw, again);
    }

    #[test]
    fn bad_snapshot_is_rejected() {
        assert!(KnowledgeBase::read_snapshot(&b"TSKB2aaaa"[..]).is_err());
        assert!(KnowledgeBase::read_snapshot(&b"TSKB1"[..]).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let series: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kb = KnowledgeBase::build(&series, 21, 14, 1).unwrap();
        let q = &series[100..114];
        let a = kb
            .retrieve_dtw_with(Execution::Sequential, q, 5, 280)
            .unwrap();
        let b = kb
            .retrieve_dtw_with(Execution::Parallel, q, 5, 280)
            .unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn both_modes_match_exhaustive_scan(
            seed in 0u64..10_000,
            len in 10usize..120,
            n in 1usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // coarse integer values force ties through the tie-break path
            let series: Vec<f64> = (0..len).map(|_| rng.gen_range(0..4) as f64).collect();
            let l_v = rng.gen_range(4..=8).min(len);
            let l_r = rng.gen_range(1..=l_v.min(6));
            let stride = rng.gen_range(1..=3);
            let mut kb = KnowledgeBase::build(&series, l_v, l_r, stride).unwrap();
            let query: Vec<f64> = (0..l_r).map(|_| rng.gen_range(0..4) as f64).collect();
            let exclude_from = rng.gen_range(0..=len);

            let got = kb.retrieve_dtw(&query, n, exclude_from).unwrap();
            let want = exhaustive(&kb, &query, n, exclude_from, RetrievalMode::Dtw);
            prop_assert_eq!(got.start_indices(), want.iter().map(|w| w.0).collect::<Vec<_>>());

            kb.reindex_embeddings(|e| Ok(e.k_segment().iter().map(|v| v * 0.5 + 1.0).collect())).unwrap();
            let q: Vec<f64> = query.iter().map(|v| v * 0.5 + 1.0).collect();
            let got = kb.retrieve_embedding(&q, n, exclude_from).unwrap();
            let want = exhaustive(&kb, &q, n, exclude_from, RetrievalMode::Embedding);
            prop_assert_eq!(got.start_indices(), want.iter().map(|w| w.0).collect::<Vec<_>>());
            for w in got.ranked.windows(2) {
                prop_assert!(w[0].distance <= w[1].distance);
            }
        }

        #[test]
        fn build_is_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
            prop_assert_eq!(
                KnowledgeBase::build(&series, 9, 5, 2).unwrap(),
                KnowledgeBase::build(&series, 9, 5, 2).unwrap()
            );
        }
    }
}
