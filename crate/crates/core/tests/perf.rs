use focus_core::config::{Dims, FocusConfig, RetentionSchedule, SimThreshold};
use focus_core::layer::{random_weights, run_pipeline};
use focus_core::perf::{evaluate_functional, evaluate_timing, record_dram_bytes, tile_write_bytes};
use focus_core::stats::{GemmKind, GemmRecord, InputTile, LayerStats, OutputTile};
use focus_core::trace::{generate_synthetic_trace, SparsityRecord, SparsityTrace, TraceGenConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(layers: usize) -> FocusConfig {
    FocusConfig {
        dims: Dims {
            frames: 4,
            rows: 6,
            cols: 6,
            text_tokens: 5,
            d_model: 64,
            heads: 2,
            head_dim: 32,
        },
        num_layers: layers,
        retention_schedule: RetentionSchedule(vec![(1, 0.5)]),
        ..FocusConfig::default()
    }
}

fn functional_run(cfg: &FocusConfig, temporal: f64) -> Vec<LayerStats> {
    let grid = generate_synthetic_trace(&TraceGenConfig {
        dims: cfg.dims,
        temporal_similarity: temporal,
        spatial_similarity: 0.2,
        noise_sigma: 0.0,
        seed: 17,
    })
    .unwrap();
    let w = random_weights(cfg.num_layers, cfg.dims.d_model, cfg.ffn_dim(), 17);
    run_pipeline(&grid, &w, cfg).unwrap().stats
}

#[test]
fn utilization_identity_holds() {
    let cfg = small_config(3);
    let rep = evaluate_functional(&cfg, &functional_run(&cfg, 0.8));
    let lhs = rep.pe_utilization * (cfg.tile.a * cfg.tile.b) as f64 * rep.gemm_cycles as f64;
    let rhs = rep.ops_actual as f64;
    assert!((lhs - rhs).abs() <= rhs * f64::EPSILON * 4.0, "{lhs} vs {rhs}");
    assert!(rep.pe_utilization <= 1.0);
    assert!(rep.total_cycles >= rep.gemm_cycles);
    for l in &rep.layers {
        assert!(l.utilization <= 1.0);
    }
}

#[test]
fn histogram_counts_every_chunk_pass() {
    let cfg = small_config(2);
    let stats = functional_run(&cfg, 0.5);
    let rep = evaluate_functional(&cfg, &stats);
    let passes: u64 = stats
        .iter()
        .flat_map(|s| &s.gemms)
        .map(|g| g.batch as u64 * g.input_tiles.iter().map(|t| t.chunk_p.len() as u64).sum::<u64>())
        .sum();
    assert_eq!(rep.tile_length_histogram.values().sum::<u64>(), passes);
}

#[test]
fn disabled_threshold_traffic_is_dense_plus_overhead() {
    let mut cfg = small_config(2);
    cfg.sim_threshold = SimThreshold::DISABLED;
    let stats = functional_run(&cfg, 0.9);
    for s in &stats {
        for g in &s.gemms {
            let Some(tiles) = &g.output_tiles else { continue };
            let dense: u64 = tiles.iter().map(|t| (t.rows * t.width * 4) as u64).sum();
            let overhead: u64 = tiles.iter().map(|t| (t.rows * 4 + t.offset_entries) as u64).sum();
            assert_eq!(g.dram_written, dense + overhead, "{:?}", g.kind);
            assert!(tiles.iter().all(|t| t.p == t.rows));
        }
    }
}

/// Serializes a tile's payload, map and offsets and returns the byte count.
fn serialized_tile_len(p: usize, n: usize, rows: usize, offsets: &[u8], rng: &mut ChaCha8Rng) -> usize {
    let mut buf: Vec<u8> = Vec::new();
    for _ in 0..p * n {
        buf.extend_from_slice(&rng.random::<f32>().to_le_bytes());
    }
    for _ in 0..rows {
        buf.extend_from_slice(&(rng.random_range(0..p.max(1)) as u32).to_le_bytes());
    }
    buf.extend_from_slice(offsets);
    buf.len()
}

#[test]
fn tile_bytes_match_serialized_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let rows = rng.random_range(1..=1024usize);
        let p = rng.random_range(1..=rows);
        let n = rng.random_range(1..=64usize);
        let offsets: Vec<u8> = (0..rng.random_range(0..=rows)).map(|_| rng.random()).collect();
        let want = serialized_tile_len(p, n, rows, &offsets, &mut rng);
        assert_eq!(tile_write_bytes(p, n, rows, offsets.len()), want as u64);
    }
}

fn synthetic_record(tiles: &[Vec<usize>], rows: usize, k: usize, n_dim: usize) -> GemmRecord {
    let input_tiles: Vec<InputTile> = tiles
        .iter()
        .map(|ps| InputTile {
            rows,
            chunk_p: ps.clone(),
            chunk_width: vec![k; ps.len()],
            offset_entries: 0,
        })
        .collect();
    let k_dim = k * tiles[0].len();
    let ops: u64 = tiles.iter().flatten().map(|&p| (p * k * n_dim) as u64).sum();
    let output_tiles = (0..tiles.len())
        .flat_map(|ti| {
            (0..n_dim.div_ceil(k)).map(move |_| OutputTile {
                row_tile: ti,
                rows,
                width: k,
                p: rows,
                offset_entries: 0,
            })
        })
        .collect();
    let mut rec = GemmRecord {
        kind: GemmKind::Ffn2,
        batch: 1,
        k_dim,
        n_dim,
        input_concentrated: true,
        input_tiles,
        output_tiles: Some(output_tiles),
        ops_dense: (tiles.len() * rows * k_dim * n_dim) as u64,
        ops_actual: ops,
        scatter_accum_ops: 0,
        dram_read: 0,
        dram_written: 0,
    };
    let (r, w) = record_dram_bytes(&rec);
    rec.dram_read = r;
    rec.dram_written = w;
    rec
}

fn layer_with(rec: GemmRecord) -> LayerStats {
    let mut s = LayerStats::new(0, 0, 0, 0);
    s.push(rec);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cycles_never_grow_when_p_shrinks(
        ps in proptest::collection::vec(proptest::collection::vec(1usize..=256, 4), 1..4),
        which in any::<proptest::sample::Index>(),
        shrink in 1usize..=255,
        acc in prop_oneof![Just(8usize), Just(64), Just(512)],
        bw in prop_oneof![Just(4.0f64), Just(128.0), Just(1e6)],
    ) {
        let cfg = FocusConfig { scatter_accumulators: acc, dram_bandwidth: bw, ..FocusConfig::default() };
        let rows = 256;
        let before = evaluate_functional(&cfg, &[layer_with(synthetic_record(&ps, rows, 32, 64))]);
        let mut smaller = ps.clone();
        let flat = which.index(ps.len() * 4);
        let cell = &mut smaller[flat / 4][flat % 4];
        *cell = cell.saturating_sub(shrink).max(1);
        let after = evaluate_functional(&cfg, &[layer_with(synthetic_record(&smaller, rows, 32, 64))]);
        prop_assert!(after.total_cycles <= before.total_cycles);
        prop_assert!(after.gemm_cycles <= before.gemm_cycles);
        prop_assert!(after.dram_bytes_read <= before.dram_bytes_read);
    }

    #[test]
    fn more_accumulators_never_add_stall(ps in proptest::collection::vec(proptest::collection::vec(1usize..=256, 4), 1..3)) {
        let mut prev = u64::MAX;
        for acc in [1usize, 8, 16, 32, 64, 128, 1024] {
            let cfg = FocusConfig { scatter_accumulators: acc, dram_bandwidth: 1e9, ..FocusConfig::default() };
            let rep = evaluate_functional(&cfg, &[layer_with(synthetic_record(&ps, 256, 32, 64))]);
            prop_assert!(rep.stall_cycles <= prev);
            prev = rep.stall_cycles;
        }
    }
}

fn uniform_trace(layers: usize, total_ops: u64, s: f64, tokens: usize, tile_m: usize) -> SparsityTrace {
    let records = (0..layers)
        .map(|layer| SparsityRecord {
            layer,
            total_ops,
            retained_ops: ((1.0 - s) * total_ops as f64).round() as u64,
            retained_tokens: tokens,
            compact_p: (((1.0 - s) * tile_m as f64).round() as usize).max(1),
        })
        .collect();
    SparsityTrace::new(records).unwrap()
}

#[test]
fn timing_speedup_tracks_op_sparsity() {
    let cfg = FocusConfig {
        retention_schedule: RetentionSchedule::none(),
        scatter_accumulators: 1 << 20,
        dram_bandwidth: 1e12,
        ..FocusConfig::default()
    };
    let m = cfg.dims.image_tokens();
    let total = 1_000_000_000u64;
    let dense = evaluate_timing(&cfg, &uniform_trace(28, total, 0.0, m, cfg.tile.m)).unwrap();
    assert_eq!(dense.stall_cycles, 0);
    for s in [0.5, 0.8] {
        let sparse = evaluate_timing(&cfg, &uniform_trace(28, total, s, m, cfg.tile.m)).unwrap();
        assert_eq!(sparse.stall_cycles, 0);
        let speedup = dense.total_cycles as f64 / sparse.total_cycles as f64;
        let want = 1.0 / (1.0 - s);
        assert!((speedup / want - 1.0).abs() <= 0.02, "S={s}: {speedup} vs {want}");
    }
}

#[test]
fn timing_mode_rejects_inconsistent_trace() {
    let cfg = FocusConfig::default();
    let bad = SparsityTrace::new(vec![SparsityRecord {
        layer: 0,
        total_ops: 10,
        retained_ops: 5,
        retained_tokens: cfg.dims.image_tokens() + 1,
        compact_p: 4,
    }]);
    if let Ok(t) = bad {
        assert!(evaluate_timing(&cfg, &t).is_err());
    }
}
