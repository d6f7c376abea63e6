//! Seeded random program generator.
//!
//! Emits source text that always parses and validates cleanly: every used
//! variable is defined somewhere in its function, direct calls match their
//! callee's arity, branches never target an entry block, field offsets stay
//! within the configured maximum, and `@main` always exists. The same seed
//! and configuration produce byte-identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Relative weights for non-terminator instruction kinds.
#[derive(Debug, Clone)]
pub struct OpWeights {
    pub alloc: u32,
    pub addr: u32,
    pub copy: u32,
    pub load: u32,
    pub store: u32,
    pub field: u32,
    pub call: u32,
    pub icall: u32,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            alloc: 4,
            addr: 3,
            copy: 4,
            load: 3,
            store: 3,
            field: 2,
            call: 2,
            icall: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seed: u64,
    /// Module-level globals.
    pub globals: usize,
    /// Total functions including `main`.
    pub funcs: usize,
    /// Local variable pool per function, in addition to parameters.
    pub vars_per_func: usize,
    /// Blocks per function including the entry block.
    pub blocks_per_func: usize,
    /// Maximum non-terminator instructions per block (at least one).
    pub instrs_per_block: usize,
    /// Field offsets are drawn from `0..=max_field`.
    pub max_field: u32,
    /// Emit only single-target branches so execution is deterministic.
    pub deterministic: bool,
    /// Allow calls to any function (cycles included) instead of only
    /// later-indexed ones.
    pub allow_recursion: bool,
    pub weights: OpWeights,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            globals: 2,
            funcs: 3,
            vars_per_func: 8,
            blocks_per_func: 3,
            instrs_per_block: 6,
            max_field: 2,
            deterministic: false,
            allow_recursion: false,
            weights: OpWeights::default(),
        }
    }
}

impl GenConfig {
    /// A configuration whose output lands near `target` instructions.
    pub fn sized(seed: u64, target: usize) -> Self {
        let funcs = (target / 60).clamp(1, 64);
        let blocks = 3;
        // Terminators and backfilled definitions take some of the budget;
        // aim slightly low with the per-block cap.
        let per_block = (target / (funcs * blocks)).clamp(1, 400);
        GenConfig {
            seed,
            funcs,
            blocks_per_func: blocks,
            instrs_per_block: per_block,
            vars_per_func: (per_block * blocks / 3).clamp(4, 48),
            ..GenConfig::default()
        }
    }
}

struct FuncPlan {
    name: String,
    params: Vec<String>,
}

/// Generate a program as source text.
pub fn generate_program(cfg: &GenConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let funcs = cfg.funcs.max(1);
    let globals: Vec<String> = (0..cfg.globals).map(|i| format!("g{i}")).collect();

    let mut plans = vec![FuncPlan {
        name: "main".to_string(),
        params: Vec::new(),
    }];
    for i in 1..funcs {
        let arity = rng.gen_range(0..=3usize);
        plans.push(FuncPlan {
            name: format!("f{i}"),
            params: (0..arity).map(|p| format!("p{p}")).collect(),
        });
    }

    let mut out = String::new();
    for g in &globals {
        let _ = writeln!(out, "global @{g}");
    }
    if !globals.is_empty() {
        out.push('\n');
    }

    for fi in 0..funcs {
        let body = emit_function(cfg, &mut rng, &plans, &globals, fi);
        out.push_str(&body);
        if fi + 1 < funcs {
            out.push('\n');
        }
    }
    out
}

fn emit_function(
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
    plans: &[FuncPlan],
    globals: &[String],
    fi: usize,
) -> String {
    let plan = &plans[fi];
    let pool: Vec<String> = plan
        .params
        .iter()
        .cloned()
        .chain((0..cfg.vars_per_func.max(1)).map(|i| format!("v{i}")))
        .collect();
    let blocks = cfg.blocks_per_func.max(1);
    let labels: Vec<String> = (0..blocks)
        .map(|b| if b == 0 { "entry".to_string() } else { format!("b{b}") })
        .collect();

    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut defined: BTreeSet<String> = plan.params.iter().cloned().collect();
    let mut bodies: Vec<Vec<String>> = Vec::new();

    for b in 0..blocks {
        let mut instrs = Vec::new();
        let count = rng.gen_range(1..=cfg.instrs_per_block.max(1));
        for _ in 0..count {
            if let Some(line) = emit_instr(
                cfg,
                rng,
                plans,
                globals,
                fi,
                &pool,
                &mut used,
                &mut defined,
            ) {
                instrs.push(line);
            }
        }
        // Terminator: the last block returns; earlier blocks mostly branch
        // forward, sometimes loop back to a non-entry block, and
        // occasionally return early.
        let term = if b + 1 == blocks {
            emit_ret(rng, &pool, &mut used)
        } else if rng.gen_ratio(1, 8) {
            emit_ret(rng, &pool, &mut used)
        } else {
            let forward: Vec<usize> = (b + 1..blocks).collect();
            let backward: Vec<usize> = (1..=b).collect();
            let pick = |rng: &mut ChaCha8Rng| -> usize {
                if !backward.is_empty() && rng.gen_ratio(1, 5) {
                    backward[rng.gen_range(0..backward.len())]
                } else {
                    forward[rng.gen_range(0..forward.len())]
                }
            };
            let first = pick(rng);
            if cfg.deterministic || rng.gen_bool(0.5) {
                format!("br {}", labels[first])
            } else {
                let second = pick(rng);
                format!("br {}, {}", labels[first], labels[second])
            }
        };
        instrs.push(term);
        bodies.push(instrs);
    }

    // Backfill: any variable that was read but never assigned gets an
    // allocation at the top of the entry block, keeping the module valid.
    let missing: Vec<String> = used.difference(&defined).cloned().collect();
    for (i, v) in missing.iter().rev().enumerate() {
        bodies[0].insert(0, format!("%{v} = alloc Seed{}", missing.len() - 1 - i));
    }

    let mut out = String::new();
    let params = plan
        .params
        .iter()
        .map(|p| format!("%{p}"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "func @{}({}) {{", plan.name, params);
    for (b, label) in labels.iter().enumerate() {
        let _ = writeln!(out, "{label}:");
        for line in &bodies[b] {
            let _ = writeln!(out, "  {line}");
        }
    }
    out.push_str("}\n");
    out
}

#[allow(clippy::too_many_arguments)]
fn emit_instr(
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
    plans: &[FuncPlan],
    globals: &[String],
    fi: usize,
    pool: &[String],
    used: &mut BTreeSet<String>,
    defined: &mut BTreeSet<String>,
) -> Option<String> {
    let w = &cfg.weights;
    let table = [
        w.alloc, w.addr, w.copy, w.load, w.store, w.field, w.call, w.icall,
    ];
    let total: u32 = table.iter().sum();
    if total == 0 {
        return None;
    }
    let mut roll = rng.gen_range(0..total);
    let mut kind = 0;
    for (i, &weight) in table.iter().enumerate() {
        if roll < weight {
            kind = i;
            break;
        }
        roll -= weight;
    }

    let def = |rng: &mut ChaCha8Rng, defined: &mut BTreeSet<String>| -> String {
        let v = pool[rng.gen_range(0..pool.len())].clone();
        defined.insert(v.clone());
        v
    };
    let read = |rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>| -> String {
        let v = pool[rng.gen_range(0..pool.len())].clone();
        used.insert(v.clone());
        v
    };

    Some(match kind {
        0 => {
            let d = def(rng, defined);
            format!("%{d} = alloc H{}", rng.gen_range(0..4))
        }
        1 => {
            // Address of a global or a function (function addresses feed
            // icalls).
            let d = def(rng, defined);
            let take_func = globals.is_empty() || rng.gen_bool(0.4);
            if take_func && plans.len() > 1 {
                let f = rng.gen_range(1..plans.len());
                format!("%{d} = addr @{}", plans[f].name)
            } else if !globals.is_empty() {
                format!("%{d} = addr @{}", globals[rng.gen_range(0..globals.len())])
            } else {
                format!("%{d} = alloc H{}", rng.gen_range(0..4))
            }
        }
        2 => {
            let s = read(rng, used);
            let d = def(rng, defined);
            format!("%{d} = copy %{s}")
        }
        3 => {
            let p = read(rng, used);
            let d = def(rng, defined);
            format!("%{d} = load %{p}")
        }
        4 => {
            let v = read(rng, used);
            let p = read(rng, used);
            format!("store %{v}, %{p}")
        }
        5 => {
            let b = read(rng, used);
            let d = def(rng, defined);
            format!("%{d} = field %{b}, {}", rng.gen_range(0..=cfg.max_field))
        }
        6 => {
            // Direct call; without recursion only later-indexed callees are
            // allowed, which keeps the static call graph acyclic.
            let lo = if cfg.allow_recursion { 1 } else { fi + 1 };
            if lo >= plans.len() {
                let d = def(rng, defined);
                format!("%{d} = alloc H{}", rng.gen_range(0..4))
            } else {
                let f = rng.gen_range(lo..plans.len());
                let args: Vec<String> = (0..plans[f].params.len())
                    .map(|_| format!("%{}", read(rng, used)))
                    .collect();
                let call = format!("call @{}({})", plans[f].name, args.join(", "));
                if rng.gen_bool(0.7) {
                    let d = def(rng, defined);
                    format!("%{d} = {call}")
                } else {
                    call
                }
            }
        }
        _ => {
            let p = read(rng, used);
            let args: Vec<String> = (0..rng.gen_range(0..=3usize))
                .map(|_| format!("%{}", read(rng, used)))
                .collect();
            let icall = format!("icall %{p}({})", args.join(", "));
            if rng.gen_bool(0.7) {
                let d = def(rng, defined);
                format!("%{d} = {icall}")
            } else {
                icall
            }
        }
    })
}

fn emit_ret(rng: &mut ChaCha8Rng, pool: &[String], used: &mut BTreeSet<String>) -> String {
    if rng.gen_bool(0.6) {
        let v = pool[rng.gen_range(0..pool.len())].clone();
        used.insert(v.clone());
        format!("ret %{v}")
    } else {
        "ret".to_string()
    }
}
