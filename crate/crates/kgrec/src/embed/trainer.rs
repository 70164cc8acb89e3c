//! Margin-based training loop over a lock-free shared parameter store.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::kgraph::{EntityKind, EntityRef, KnowledgeGraph, RelationType, Triple};
use crate::util::derive_seed;

use super::{
    fill_negatives, kernels, ComplexVec, EmbedError, EmbeddingTable, Optimizer, ParamKey, Scorer,
    TrainConfig,
};

/// Flat parameter storage shared across workers. Every coordinate is an
/// `AtomicU64` holding an `f64` bit pattern, read and written with relaxed
/// loads and stores. Concurrent batches may interleave (last write wins);
/// with a single worker the atomics compile to plain memory operations and
/// the run is bit-reproducible.
struct ParamStore {
    dim: usize,
    width: usize,
    counts: [usize; 3],
    kind_offsets: [usize; 3],
    relations: Vec<RelationType>,
    relation_offset: usize,
    values: Vec<AtomicU64>,
    accum: Vec<AtomicU64>,
}

impl ParamStore {
    fn new(graph: &KnowledgeGraph, dim: usize) -> Self {
        let width = 2 * dim;
        let counts = [
            graph.entities().count(EntityKind::User),
            graph.entities().count(EntityKind::Item),
            graph.entities().count(EntityKind::Aspect),
        ];
        let kind_offsets = [0, counts[0] * width, (counts[0] + counts[1]) * width];
        let relations: Vec<RelationType> = graph
            .edges()
            .iter()
            .map(|e| e.relation)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let relation_offset = (counts[0] + counts[1] + counts[2]) * width;
        let len = relation_offset + relations.len() * width;
        ParamStore {
            dim,
            width,
            counts,
            kind_offsets,
            relations,
            relation_offset,
            values: (0..len).map(|_| AtomicU64::new(0)).collect(),
            accum: (0..len).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    /// Fills every vector with independent draws from N(0, 1/sqrt(dim)),
    /// entity kinds first, relations last, in one deterministic stream.
    fn init_gaussian(&self, seed: u64) {
        let sigma = 1.0 / (self.dim as f64).sqrt();
        let normal = Normal::new(0.0, sigma).expect("positive std dev");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in &self.values {
            slot.store(normal.sample(&mut rng).to_bits(), Ordering::Relaxed);
        }
    }

    fn offset(&self, key: ParamKey) -> Option<usize> {
        match key {
            ParamKey::Entity(e) => {
                let id = e.id as usize;
                (id < self.counts[e.kind.index()])
                    .then(|| self.kind_offsets[e.kind.index()] + id * self.width)
            }
            ParamKey::Relation(r) => self
                .relations
                .binary_search(&r)
                .ok()
                .map(|pos| self.relation_offset + pos * self.width),
        }
    }

    fn load_into(&self, offset: usize, out: &mut [f64]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = f64::from_bits(self.values[offset + i].load(Ordering::Relaxed));
        }
    }

    /// One optimizer step on a single vector. Zero-gradient coordinates are
    /// skipped so untouched state (including accumulators) stays untouched.
    fn apply(&self, offset: usize, grad: &[f64], learning_rate: f64, optimizer: Optimizer) {
        for (i, &g) in grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let step = match optimizer {
                Optimizer::Sgd => learning_rate * g,
                Optimizer::Adagrad => {
                    let acc_slot = &self.accum[offset + i];
                    let acc = f64::from_bits(acc_slot.load(Ordering::Relaxed)) + g * g;
                    acc_slot.store(acc.to_bits(), Ordering::Relaxed);
                    learning_rate * g / (acc.sqrt() + 1e-10)
                }
            };
            let slot = &self.values[offset + i];
            let v = f64::from_bits(slot.load(Ordering::Relaxed));
            slot.store((v - step).to_bits(), Ordering::Relaxed);
        }
    }

    fn to_table(
        &self,
        graph: &KnowledgeGraph,
        scorer: super::Scorer,
    ) -> Result<EmbeddingTable, EmbedError> {
        let mut table = EmbeddingTable::zeroed(graph.entities().clone(), self.dim, scorer);
        for kind in EntityKind::ALL {
            for id in 0..self.counts[kind.index()] {
                let entity = EntityRef {
                    kind,
                    id: id as u32,
                };
                let mut flat = vec![0.0; self.width];
                self.load_into(self.kind_offsets[kind.index()] + id * self.width, &mut flat);
                table.set_entity_vec(entity, ComplexVec::from_flat(self.dim, flat)?)?;
            }
        }
        for (pos, &relation) in self.relations.iter().enumerate() {
            let mut flat = vec![0.0; self.width];
            self.load_into(self.relation_offset + pos * self.width, &mut flat);
            table.insert_relation(relation, ComplexVec::from_flat(self.dim, flat)?)?;
        }
        Ok(table)
    }
}

/// Reusable per-worker buffers so the hot loop allocates nothing.
#[derive(Default)]
struct Scratch {
    negatives: Vec<Triple>,
    keys: Vec<ParamKey>,
    offsets: Vec<usize>,
    neg_slots: Vec<(usize, usize, usize)>,
    vals: Vec<f64>,
    grads: Vec<f64>,
}

fn slot_for(store: &ParamStore, scratch: &mut Scratch, key: ParamKey) -> Result<usize, EmbedError> {
    if let Some(pos) = scratch.keys.iter().position(|k| *k == key) {
        return Ok(pos);
    }
    let offset = store.offset(key).ok_or(match key {
        ParamKey::Entity(e) => EmbedError::MissingEntity(e),
        ParamKey::Relation(r) => EmbedError::MissingRelation(r),
    })?;
    scratch.keys.push(key);
    scratch.offsets.push(offset);
    let start = scratch.vals.len();
    scratch.vals.resize(start + store.width, 0.0);
    store.load_into(offset, &mut scratch.vals[start..]);
    Ok(scratch.keys.len() - 1)
}

/// Processes one batch of edges: reseeds from (seed, epoch, batch), samples
/// negatives, computes the hinge terms and their gradients, and applies the
/// updates in place. Returns the summed batch loss.
fn process_batch(
    store: &ParamStore,
    graph: &KnowledgeGraph,
    config: &TrainConfig,
    epoch: usize,
    batch: usize,
    edge_indices: &[usize],
    scratch: &mut Scratch,
) -> Result<f64, EmbedError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        "batch",
        epoch as u64,
        batch as u64,
    ));
    let width = store.width;
    let diverged = || EmbedError::NonFiniteLoss { epoch, batch };
    let mut batch_loss = 0.0;
    for &edge_index in edge_indices {
        let edge = graph.edges()[edge_index];
        let mut negatives = std::mem::take(&mut scratch.negatives);
        fill_negatives(&edge, graph, config.negatives, &mut rng, &mut negatives)?;

        scratch.keys.clear();
        scratch.offsets.clear();
        scratch.vals.clear();
        scratch.neg_slots.clear();
        let es = slot_for(store, scratch, ParamKey::Entity(edge.source))?;
        let er = slot_for(store, scratch, ParamKey::Relation(edge.relation))?;
        let ed = slot_for(store, scratch, ParamKey::Entity(edge.destination))?;
        for neg in &negatives {
            let ns = slot_for(store, scratch, ParamKey::Entity(neg.source))?;
            let nr = slot_for(store, scratch, ParamKey::Relation(neg.relation))?;
            let nd = slot_for(store, scratch, ParamKey::Entity(neg.destination))?;
            scratch.neg_slots.push((ns, nr, nd));
        }
        scratch.grads.clear();
        scratch.grads.resize(scratch.keys.len() * width, 0.0);

        let at = |slot: usize| slot * width;
        let Scratch {
            keys,
            offsets,
            neg_slots,
            vals,
            grads,
            ..
        } = scratch;
        let vals: &[f64] = vals;
        let positive = kernels::score_flat(
            config.scorer,
            store.dim,
            &vals[at(es)..at(es) + width],
            &vals[at(er)..at(er) + width],
            &vals[at(ed)..at(ed) + width],
        );
        if !positive.is_finite() {
            return Err(diverged());
        }
        for &(ns, nr, nd) in neg_slots.iter() {
            let negative = kernels::score_flat(
                config.scorer,
                store.dim,
                &vals[at(ns)..at(ns) + width],
                &vals[at(nr)..at(nr) + width],
                &vals[at(nd)..at(nd) + width],
            );
            if !negative.is_finite() {
                return Err(diverged());
            }
            let active = negative - positive + config.margin;
            if active > 0.0 {
                batch_loss += active;
                kernels::add_partials_flat(
                    config.scorer,
                    store.dim,
                    &vals[at(ns)..at(ns) + width],
                    &vals[at(nr)..at(nr) + width],
                    &vals[at(nd)..at(nd) + width],
                    1.0,
                    grads,
                    at(ns),
                    at(nr),
                    at(nd),
                );
                kernels::add_partials_flat(
                    config.scorer,
                    store.dim,
                    &vals[at(es)..at(es) + width],
                    &vals[at(er)..at(er) + width],
                    &vals[at(ed)..at(ed) + width],
                    -1.0,
                    grads,
                    at(es),
                    at(er),
                    at(ed),
                );
            }
        }
        for i in 0..keys.len() {
            store.apply(
                offsets[i],
                &grads[at(i)..at(i) + width],
                config.learning_rate,
                config.optimizer,
            );
        }
        scratch.negatives = negatives;
    }
    if !batch_loss.is_finite() {
        return Err(diverged());
    }
    Ok(batch_loss)
}

fn flat_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Bilinear scores are unchanged when every item vector is negated together
/// with every item-destined relation vector, so training leaves the sign of
/// user-item cosine to the luck of the initialization draw. Similarity
/// readouts expect highly rated items to sit closer to their raters than
/// poorly rated ones; when a trained table came out the other way around,
/// apply the score-preserving flip. Translation scores lack this symmetry,
/// so TransE tables are left alone.
fn canonicalize_item_orientation(table: &mut EmbeddingTable, graph: &KnowledgeGraph) {
    if table.scorer() == Scorer::TransE {
        return;
    }
    let mut high = (0.0, 0usize);
    let mut low = (0.0, 0usize);
    for edge in graph.edges() {
        let bucket = match edge.relation {
            RelationType::HighRating => &mut high,
            RelationType::LowRating => &mut low,
            _ => continue,
        };
        let (Some(s), Some(d)) = (
            table.entity_vec(edge.source),
            table.entity_vec(edge.destination),
        ) else {
            continue;
        };
        if let Some(c) = flat_cosine(s.as_flat(), d.as_flat()) {
            bucket.0 += c;
            bucket.1 += 1;
        }
    }
    let mean = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { sum / n as f64 };
    if mean(high) - mean(low) >= 0.0 {
        return;
    }
    for id in 0..graph.entities().count(EntityKind::Item) as u32 {
        let entity = EntityRef {
            kind: EntityKind::Item,
            id,
        };
        if let Some(vec) = table.param_mut(ParamKey::Entity(entity)) {
            for v in vec.as_flat_mut() {
                *v = -*v;
            }
        }
    }
    let flipped: Vec<RelationType> = table
        .relations()
        .map(|(r, _)| r)
        .filter(|r| r.dest_kind() == EntityKind::Item)
        .collect();
    for relation in flipped {
        if let Some(vec) = table.param_mut(ParamKey::Relation(relation)) {
            for v in vec.as_flat_mut() {
                *v = -*v;
            }
        }
    }
}

/// A trained embedding table plus the mean per-edge loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub table: EmbeddingTable,
    pub epoch_losses: Vec<f64>,
}

/// Trains embeddings for every entity and every relation present in the
/// graph. Each epoch shuffles the edges with a seed derived from
/// (seed, epoch), splits them into batches, and walks the batches either
/// inline (`workers = 1`) or on a scoped thread pool that claims batch
/// indices from a shared counter. Diverging to a non-finite loss aborts
/// with an error naming the epoch and batch. The finished table has its
/// item orientation canonicalized; for bilinear scorers this leaves every
/// triple score bit-identical.
pub fn train(graph: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainOutput, EmbedError> {
    config.validate()?;
    let store = ParamStore::new(graph, config.dim);
    store.init_gaussian(config.seed);
    let n_edges = graph.edges().len();
    let mut order: Vec<usize> = (0..n_edges).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle", epoch as u64, 0));
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(config.batch_size.max(1)).collect();
        let mut epoch_loss = 0.0;
        if config.workers == 1 {
            let mut scratch = Scratch::default();
            for (batch, indices) in batches.iter().enumerate() {
                epoch_loss +=
                    process_batch(&store, graph, config, epoch, batch, indices, &mut scratch)?;
            }
        } else {
            let next = AtomicUsize::new(0);
            let failure: Mutex<Option<EmbedError>> = Mutex::new(None);
            let batch_losses: Vec<AtomicU64> = (0..batches.len())
                .map(|_| AtomicU64::new(0.0f64.to_bits()))
                .collect();
            std::thread::scope(|scope| {
                for _ in 0..config.workers {
                    scope.spawn(|| {
                        let mut scratch = Scratch::default();
                        loop {
                            let batch = next.fetch_add(1, Ordering::Relaxed);
                            if batch >= batches.len() {
                                break;
                            }
                            match process_batch(
                                &store,
                                graph,
                                config,
                                epoch,
                                batch,
                                batches[batch],
                                &mut scratch,
                            ) {
                                Ok(loss) => {
                                    batch_losses[batch].store(loss.to_bits(), Ordering::Relaxed)
                                }
                                Err(e) => {
                                    *failure.lock().expect("worker panicked") = Some(e);
                                    break;
                                }
                            }
                        }
                    });
                }
            });
            if let Some(e) = failure.into_inner().expect("worker panicked") {
                return Err(e);
            }
            epoch_loss = batch_losses
                .iter()
                .map(|l| f64::from_bits(l.load(Ordering::Relaxed)))
                .sum();
        }
        let mean = if n_edges == 0 {
            0.0
        } else {
            epoch_loss / n_edges as f64
        };
        info!("epoch {}/{}: mean loss {mean:.6}", epoch + 1, config.epochs);
        epoch_losses.push(mean);
    }
    let mut table = store.to_table(graph, config.scorer)?;
    canonicalize_item_orientation(&mut table, graph);
    Ok(TrainOutput {
        table,
        epoch_losses,
    })
}
