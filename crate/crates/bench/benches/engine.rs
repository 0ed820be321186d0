use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use bttt_core::{heuristic, Board, Square};

fn midgames(n: usize) -> Vec<Board> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let brick: Square = "D4".parse().unwrap();
    (0..n)
        .map(|_| {
            let mut b = Board::new(brick);
            for _ in 0..rng.random_range(4..16) {
                let legal = b.legal_moves();
                let next = b
                    .apply_move(legal[rng.random_range(0..legal.len())])
                    .unwrap();
                if next.outcome().is_decided() {
                    break;
                }
                b = next;
            }
            b
        })
        .collect()
}

fn board(c: &mut Criterion) {
    let boards = midgames(64);
    c.bench_function("apply_move over all legal moves", |bench| {
        bench.iter(|| {
            let mut n = 0;
            for b in &boards {
                for m in b.legal_moves() {
                    n += b.apply_move(m).unwrap().move_count();
                }
            }
            black_box(n)
        })
    });
    c.bench_function("heuristic evaluate", |bench| {
        bench.iter(|| {
            boards
                .iter()
                .map(|b| heuristic::evaluate(black_box(b)))
                .sum::<f64>()
        })
    });
    c.bench_function("to_planes", |bench| {
        bench.iter(|| {
            boards
                .iter()
                .map(|b| black_box(b.to_planes())[0])
                .sum::<f32>()
        })
    });
}

criterion_group!(benches, board);
criterion_main!(benches);
