// Development pilot: probe criterion workloads at adjustable scale.
use sinai::acceptance::{self, Scale};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let which: Vec<u8> = if args.is_empty() {
        vec![1, 2, 3, 7, 8]
    } else {
        args.iter().map(|s| s.parse().unwrap()).collect()
    };
    let mut scale = Scale::full();
    if std::env::var("PILOT_SMALL").is_ok() {
        scale.c1_envs = 200;
        scale.c3_trials = 4000;
        scale.c4_envs = 3;
        scale.c5_envs = 8;
        scale.c6_envs = 6;
        scale.c7_envs = 1000;
        scale.c8_seeds = 1000;
    }
    for id in which {
        let t0 = Instant::now();
        let out = match id {
            1 => acceptance::criterion_1(&scale),
            2 => acceptance::criterion_2(&scale),
            3 => acceptance::criterion_3(&scale),
            4 => acceptance::criterion_4(&scale),
            5 => acceptance::criterion_5(&scale),
            6 => acceptance::criterion_6(&scale),
            7 => acceptance::criterion_7(&scale),
            8 => acceptance::criterion_8(&scale),
            9 => acceptance::criterion_9(&scale),
            _ => panic!("unknown criterion"),
        };
        match out {
            Ok(o) => println!("{}  [{:.1?}]", o.line(), t0.elapsed()),
            Err(e) => println!("criterion {id} ERROR: {e}  [{:.1?}]", t0.elapsed()),
        }
    }
}
