//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagcube_cli::bench::{IcebergBench, LayoutBench};
use tagcube_cli::synth::{generate, SynthSpec, MEASURE};
use tagcube_core::cube::{self, GroupingMap};
use tagcube_core::layout::{brute_force_arrange, mla_cost, mc_block_arrange, nn_arrange, pwmc_arrange};
use tagcube_core::similarity::{
    binarize, cosine, jaccard, similarity_matrix, subcuboid_vector, tanimoto, CellSource, Cosine,
};
use tagcube_core::tagcloud::{
    entropy_of, fn_index, fp_index, prune, sort_cloud, Direction, SortKey,
};
use tagcube_core::{
    bind_schema, build_iceberg, parse_table, topk_exact, topk_iceberg, Aggregator, BoundDataset,
    CloudEngine, CuboidQuery, LayoutRegistry, QueryDescriptor, SimilarityMatrix,
    SimilarityRegistry, TagCloud,
};
use tagcube_server::{router, AppState};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn synth_dataset(id: &str, spec: &SynthSpec) -> BoundDataset {
    let table = Arc::new(generate(spec).expect("synthetic table"));
    bind_schema(id, table, &spec.dimension_names(), &[MEASURE.to_string()]).expect("bind")
}

fn zipf_dataset() -> BoundDataset {
    synth_dataset("zipf", &SynthSpec::uniform_cards(4, 50, 100_000, 1.2, 2009))
}

// 1. Oracle equivalence -------------------------------------------------------

fn random_query(rng: &mut ChaCha8Rng, ds: &BoundDataset) -> (CuboidQuery, Vec<String>) {
    let mut all = ds.schema().dimensions.clone();
    all.shuffle(rng);
    let n_dims = rng.random_range(1..=all.len().min(2));
    let dims: Vec<String> = all[..n_dims].to_vec();
    let rest: Vec<String> = all[n_dims..].to_vec();
    let agg = *Aggregator::ALL.choose(rng).unwrap();
    let mut q = CuboidQuery::new(dims.clone(), agg, Some(MEASURE.to_string()));
    let mut filter_dims = Vec::new();
    for d in rest {
        let values = ds.distinct_values(&d).unwrap();
        match rng.random_range(0..4) {
            0 => {
                let v = values.choose(rng).unwrap();
                q.filter.restrict(&d, BTreeSet::from([v.clone()]));
                filter_dims.push(d);
            }
            1 => {
                let take = rng.random_range(1..=values.len());
                let set: BTreeSet<String> = values.choose_multiple(rng, take).cloned().collect();
                q.filter.restrict(&d, set);
                filter_dims.push(d);
            }
            _ => {}
        }
    }
    if rng.random_bool(0.3) {
        let d = &dims[0];
        let groups = rng.random_range(1..=4);
        let pairs = ds
            .distinct_values(d)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), format!("g{}", i % groups)));
        q.groupings.push(GroupingMap::new(d.clone(), "group", pairs));
    }
    let mut ice_dims = dims;
    ice_dims.extend(filter_dims);
    (q, ice_dims)
}

fn criterion_1() -> Outcome {
    let datasets = [
        synth_dataset("a", &SynthSpec { cardinalities: vec![50, 20], facts: 5_000, zipf_s: 0.8, seed: 1 }),
        synth_dataset("b", &SynthSpec { cardinalities: vec![10, 30, 7], facts: 30_000, zipf_s: 1.2, seed: 2 }),
        synth_dataset("c", &SynthSpec::uniform_cards(4, 12, 100_000, 0.0, 3)),
        synth_dataset("d", &SynthSpec { cardinalities: vec![50, 3, 25, 8], facts: 60_000, zipf_s: 1.5, seed: 4 }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    let mut cells = 0;
    for i in 0..200 {
        let ds = &datasets[i % datasets.len()];
        let (q, ice_dims) = random_query(&mut rng, ds);
        let k = rng.random_range(1..=200);
        let full = build_iceberg(ds, &ice_dims, q.aggregator, q.measure.as_deref(), usize::MAX)
            .map_err(err)?
            .full_cell_count();
        let limit = full + rng.random_range(0..2);
        let ice = build_iceberg(ds, &ice_dims, q.aggregator, q.measure.as_deref(), limit).map_err(err)?;
        let approx = topk_iceberg(&ice, &q, k).map_err(err)?;
        let exact = topk_exact(ds, &q, k).map_err(err)?;
        check!(approx.tags() == exact.tags(), "query {i} ({q:?}): tag lists differ");
        if !exact.is_empty() {
            let (fp, fneg) = (fp_index(&approx, &exact).map_err(err)?, fn_index(&approx, &exact).map_err(err)?);
            check!(fp == 0.0 && fneg == 0.0, "query {i}: fp={fp} fn={fneg}");
        }
        cells += exact.len();
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("200 queries identical ({cells} tags compared) in {:.1}s", elapsed.as_secs_f64()))
}

// 2. Low-entropy quality --------------------------------------------------------

fn criterion_2(ds: &BoundDataset) -> Outcome {
    let start = Instant::now();
    let dims = ds.schema().dimensions.clone();
    let rows = IcebergBench {
        dataset: ds,
        base_dims: dims.clone(),
        display_dims: dims,
        aggregator: Aggregator::Count,
        measure: None,
        limits: vec![150, 600, 1200, 4800, 19600],
        sizes: vec![50, 100, 150, 200],
    }
    .run()
    .map_err(err)?;
    check!(rows.len() == 80, "expected 80 rows, got {}", rows.len());
    let low: Vec<_> = rows
        .iter()
        .filter(|r| r.relative_entropy.is_some_and(|h| h < 0.75))
        .collect();
    check!(!low.is_empty(), "no cell had relative entropy below 0.75");
    let worst_fp = low.iter().map(|r| r.fp_index).fold(0.0, f64::max);
    let worst_fn = low.iter().map(|r| r.fn_index).fold(0.0, f64::max);
    for r in &low {
        check!(
            r.fp_index < 0.05 && r.fn_index < 0.05,
            "{} limit={} size={}: H={:.3} fp={:.4} fn={:.4}",
            r.dims, r.limit, r.size, r.relative_entropy.unwrap(), r.fp_index, r.fn_index
        );
    }
    let elapsed = start.elapsed();
    check!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "{}/80 cells below entropy 0.75, worst fp={worst_fp:.4} fn={worst_fn:.4}, {:.1}s",
        low.len(),
        elapsed.as_secs_f64()
    ))
}

// 3. Iceberg speedup -------------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn criterion_3(ds: &BoundDataset) -> Outcome {
    let dims = ds.schema().dimensions.clone();
    let ice = build_iceberg(ds, &dims, Aggregator::Count, None, 150).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut fast, mut slow) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        let d = dims.choose(&mut rng).unwrap().clone();
        let k = *[50, 100, 150, 200].choose(&mut rng).unwrap();
        let q = CuboidQuery::new(vec![d], Aggregator::Count, None);
        let t = Instant::now();
        let a = topk_iceberg(&ice, &q, k).map_err(err)?;
        fast.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let e = topk_exact(ds, &q, k).map_err(err)?;
        slow.push(t.elapsed().as_secs_f64());
        check!(!a.is_empty() && !e.is_empty(), "empty cloud");
    }
    let (f, sl) = (median(fast), median(slow));
    let ratio = sl / f;
    check!(ratio >= 10.0, "speedup {ratio:.1}x (iceberg {:.3}ms, exact {:.3}ms)", f * 1e3, sl * 1e3);
    Ok(format!("median speedup {ratio:.0}x (iceberg {:.3}ms, exact {:.3}ms)", f * 1e3, sl * 1e3))
}

// 4. Heuristic dominance ----------------------------------------------------------

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> SimilarityMatrix {
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let x: f64 = rng.random();
            values[i * n + j] = x;
            values[j * n + i] = x;
        }
    }
    let terms = (0..n).map(|i| format!("t{i:03}")).collect();
    let weights = (0..n).map(|i| (n - i) as f64).collect();
    SimilarityMatrix::from_values(terms, weights, "uniform", values).unwrap()
}

fn cost(m: &SimilarityMatrix, arr: &tagcube_core::Arrangement) -> f64 {
    mla_cost(arr, m).unwrap().value()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..500 {
        let n = rng.random_range(10..=150);
        let m = random_matrix(&mut rng, n);
        let nn = cost(&m, &nn_arrange(&m).map_err(err)?);
        for e in [10, 100, 1000] {
            let seed = rng.random();
            let p = cost(&m, &pwmc_arrange(&m, e, seed).map_err(err)?);
            let b = cost(&m, &mc_block_arrange(&m, e, seed).map_err(err)?);
            if p > nn + 1e-9 || b > nn + 1e-9 {
                violations += 1;
            }
        }
    }
    check!(violations == 0, "{violations} dominance violations");

    let (mut small, mut optimal) = (0, 0);
    for _ in 0..300 {
        let n = rng.random_range(2..=8);
        let m = random_matrix(&mut rng, n);
        let best = cost(&m, &brute_force_arrange(&m).map_err(err)?);
        let best_oracle = oracle_min_cost(&m);
        check!((best - best_oracle).abs() < 1e-9, "brute force {best} vs oracle {best_oracle}");
        let nn = cost(&m, &nn_arrange(&m).map_err(err)?);
        check!(nn >= best - 1e-9, "nn {nn} below optimum {best}");
        let p = cost(&m, &pwmc_arrange(&m, 1000, rng.random()).map_err(err)?);
        small += 1;
        if p <= best + 1e-9 {
            optimal += 1;
        }
    }
    let rate = optimal as f64 / small as f64;
    check!(rate >= 0.9, "pwmc:1000 optimal on {optimal}/{small} small instances");
    Ok(format!(
        "0 violations over 500 matrices x 3 budgets; pwmc:1000 optimal on {optimal}/{small} instances with n <= 8"
    ))
}

/// Minimum over all orders by Heap's algorithm, independent of the engine.
fn oracle_min_cost(m: &SimilarityMatrix) -> f64 {
    let n = m.len();
    let eval = |order: &[usize]| {
        let mut total = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                total += m.get(order[a], order[b]).max(0.0) * (b - a) as f64;
            }
        }
        total
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = eval(&order);
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            best = best.min(eval(&order));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

// 5. Heuristic comparison on a synthetic dataset -----------------------------------

fn criterion_5() -> Outcome {
    let spec = SynthSpec {
        cardinalities: vec![4, 6, 9, 12, 18, 25, 40, 60],
        facts: 20_000,
        zipf_s: 1.0,
        seed: 62,
    };
    let ds = synth_dataset("wide", &spec);
    let rows = LayoutBench {
        dataset: &ds,
        dims: spec.dimension_names(),
        aggregator: Aggregator::Count,
        measure: None,
        similarities: s(&["cosine", "tanimoto"]),
        heuristics: vec!["nn".parse().unwrap(), "pwmc:1000".parse().unwrap()],
        limit: 150,
        k: 150,
        seed: 5,
    }
    .run(&SimilarityRegistry::default(), &LayoutRegistry::default())
    .map_err(err)?;
    check!(rows.len() == 56 * 2 * 2, "expected 224 rows, got {}", rows.len());
    let mut big_gains = 0;
    let mut slower = Vec::new();
    for pair in rows.chunks(2) {
        let (nn, pw) = (&pair[0], &pair[1]);
        check!(nn.heuristic == "nn" && pw.heuristic == "pwmc", "unexpected row order");
        check!(pw.mla_cost <= nn.mla_cost + 1e-9, "{} pwmc worse than nn", nn.instance);
        if nn.mla_cost > 0.0 && (nn.mla_cost - pw.mla_cost) / nn.mla_cost > 0.2 {
            big_gains += 1;
        }
        if nn.time_ms >= pw.time_ms {
            slower.push(format!("{}:{}", nn.instance, nn.similarity));
        }
    }
    let fraction = big_gains as f64 / 112.0;
    check!(fraction <= 0.15, "pwmc gained > 20% on {big_gains}/112 instances");
    check!(slower.is_empty(), "nn not faster on {slower:?}");
    Ok(format!(
        "pwmc:1000 gained > 20% on {big_gains}/112 instances ({:.1}%); nn faster on all 112",
        fraction * 100.0
    ))
}

// 6. Metric properties ---------------------------------------------------------------

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2000 {
        let n = rng.random_range(1..=200);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let h = entropy_of(&w).map_err(err)?;
        let ln_n = (n as f64).ln();
        check!(h >= -1e-12 && h <= ln_n + 1e-9, "entropy {h} outside [0, {ln_n}]");
        let c = 10f64.powf(rng.random_range(-6.0..6.0));
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let hs = entropy_of(&scaled).map_err(err)?;
        check!((h - hs).abs() < 1e-9, "scaling by {c} moved entropy by {}", (h - hs).abs());
        let uniform = vec![rng.random_range(0.1..100.0); n];
        let hu = entropy_of(&uniform).map_err(err)?;
        check!((hu - ln_n).abs() < 1e-9, "uniform entropy {hu} vs ln n {ln_n}");
    }

    let vector = |rng: &mut ChaCha8Rng, d: usize| -> Vec<f64> {
        (0..d)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..10.0) })
            .collect()
    };
    let mut worst: f64 = f64::INFINITY;
    for _ in 0..100_000 {
        let d = rng.random_range(1..=12);
        let (u, v, w) = (vector(&mut rng, d), vector(&mut rng, d), vector(&mut rng, d));
        let cuv = cosine(&u, &v);
        let slack = cosine(&u, &w) - (cosine(&v, &w) - (1.0 - cuv * cuv).max(0.0).sqrt());
        worst = worst.min(slack);
        check!(slack >= -1e-12, "transitivity fails by {slack} on {u:?} {v:?} {w:?}");
    }
    for _ in 0..10_000 {
        let d = rng.random_range(1..=20);
        let (u, v) = (vector(&mut rng, d), vector(&mut rng, d));
        let (j, t) = (jaccard(&u, &v), tanimoto(&binarize(&u), &binarize(&v)));
        let both_zero = binarize(&u).iter().chain(&binarize(&v)).all(|x| *x == 0.0);
        if both_zero {
            check!(j == 1.0, "jaccard of two empty supports is {j}");
        } else {
            check!((j - t).abs() < 1e-12, "jaccard {j} vs tanimoto {t}");
        }
    }
    Ok(format!("entropy bounds/scaling on 2000 clouds; transitivity min slack {worst:.2e} over 1e5 triples; jaccard = tanimoto on binarized 1e4 pairs"))
}

// 7. Table 1 micro-suite ----------------------------------------------------------------

const TABLE1: &str = include_str!("../../core/tests/data/table1.csv");

/// Brute-force reference written against the raw text only.
struct Oracle {
    rows: Vec<Vec<String>>,
}

impl Oracle {
    fn new(text: &str) -> Self {
        let rows = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
            .collect();
        Oracle { rows }
    }

    fn col(name: &str) -> usize {
        ["location", "time", "salesman", "product", "cost", "profit"]
            .iter()
            .position(|c| *c == name)
            .unwrap()
    }

    fn money(field: &str) -> f64 {
        field.trim_end_matches('$').trim().parse().unwrap()
    }

    /// COUNT when `measure` is None, else SUM; `keep` filters rows, `key`
    /// builds the address.
    fn group(
        &self,
        key: impl Fn(&[String]) -> Vec<String>,
        keep: impl Fn(&[String]) -> bool,
        measure: Option<&str>,
    ) -> BTreeMap<Vec<String>, f64> {
        let mut out = BTreeMap::new();
        for r in self.rows.iter().filter(|r| keep(r)) {
            let add = measure.map_or(1.0, |m| Self::money(&r[Self::col(m)]));
            *out.entry(key(r)).or_insert(0.0) += add;
        }
        out
    }

    fn by(&self, dim: &str, keep: impl Fn(&[String]) -> bool, measure: Option<&str>) -> BTreeMap<Vec<String>, f64> {
        let c = Self::col(dim);
        self.group(|r| vec![r[c].clone()], keep, measure)
    }
}

fn country(city: &str) -> &'static str {
    match city {
        "Montreal" | "Quebec" | "Ontario" => "Canada",
        "Paris" | "Lyon" => "France",
        _ => "USA",
    }
}

fn country_map() -> GroupingMap {
    let cities = ["Montreal", "Quebec", "Ontario", "Paris", "Lyon", "New York", "Detroit"];
    GroupingMap::new("location", "country", cities.iter().map(|c| (c.to_string(), country(c).to_string())))
}

fn expect(pairs: &[(&str, f64)]) -> BTreeMap<Vec<String>, f64> {
    pairs.iter().map(|(k, v)| (vec![k.to_string()], *v)).collect()
}

fn tag_pairs(cloud: &TagCloud) -> Vec<(String, f64)> {
    cloud.tags().iter().map(|t| (t.term.clone(), t.weight)).collect()
}

fn pairs(v: &[(&str, f64)]) -> Vec<(String, f64)> {
    v.iter().map(|(t, w)| (t.to_string(), *w)).collect()
}

fn criterion_7() -> Outcome {
    let oracle = Oracle::new(TABLE1);
    let all = |_: &[String]| true;
    let table = Arc::new(parse_table(TABLE1.as_bytes(), ',', true).map_err(err)?);
    check!(table.columns().len() == 6 && table.len() == 11, "table shape");
    let ds = bind_schema(
        "table1",
        table,
        &s(&["location", "time", "salesman", "product"]),
        &s(&["cost", "profit"]),
    )
    .map_err(err)?;
    let locations = ds.distinct_values("location").map_err(err)?;
    check!(locations.len() == 7 && locations[0] == "Detroit", "location dictionary {locations:?}");
    check!(
        ds.distinct_values("product").map_err(err)? == s(&["chair", "dress", "shoe", "table"]).as_slice(),
        "product dictionary"
    );
    let same = |label: &str, engine: &BTreeMap<Vec<String>, f64>, oracle: BTreeMap<Vec<String>, f64>, hand: BTreeMap<Vec<String>, f64>| {
        if *engine != oracle || oracle != hand {
            Err(format!("{label}: engine {engine:?} oracle {oracle:?} hand {hand:?}"))
        } else {
            Ok(())
        }
    };

    let loc = s(&["location"]);
    let count = cube::materialize(&ds, &loc, Aggregator::Count, None).map_err(err)?;
    same(
        "count by location",
        count.cells(),
        oracle.by("location", all, None),
        expect(&[("Paris", 3.0), ("Montreal", 2.0), ("New York", 2.0), ("Quebec", 1.0), ("Ontario", 1.0), ("Lyon", 1.0), ("Detroit", 1.0)]),
    )?;
    let profit = cube::materialize(&ds, &loc, Aggregator::Sum, Some("profit")).map_err(err)?;
    same(
        "sum profit by location",
        profit.cells(),
        oracle.by("location", all, Some("profit")),
        expect(&[("Quebec", 45.0), ("Montreal", 40.0), ("Paris", 35.0), ("New York", 20.0), ("Ontario", 10.0), ("Lyon", 10.0), ("Detroit", 10.0)]),
    )?;

    let lp = s(&["location", "product"]);
    let is_shoe = |r: &[String]| r[3] == "shoe";
    let cost_lp = cube::materialize(&ds, &lp, Aggregator::Sum, Some("cost")).map_err(err)?;
    let shoe_cost = cube::slice(&ds, &cost_lp, "product", "shoe").map_err(err)?;
    same(
        "slice shoe, sum cost",
        shoe_cost.cells(),
        oracle.by("location", is_shoe, Some("cost")),
        expect(&[("Montreal", 250.0), ("Paris", 220.0)]),
    )?;
    let prod = cube::materialize(&ds, &s(&["product"]), Aggregator::Count, None).map_err(err)?;
    let shoe_count = cube::slice(&ds, &prod, "product", "shoe").map_err(err)?;
    same(
        "slice shoe, count over no dimensions",
        shoe_count.cells(),
        oracle.group(|_| vec![], is_shoe, None),
        [(vec![], 4.0)].into(),
    )?;

    let spring = BTreeMap::from([("time".to_string(), BTreeSet::from(["March".to_string(), "April".to_string()]))]);
    let diced = cube::dice(&ds, &count, &spring).map_err(err)?;
    same(
        "dice March/April",
        diced.cells(),
        oracle.by("location", |r| r[1] == "March" || r[1] == "April", None),
        expect(&[("Montreal", 1.0), ("Paris", 2.0), ("Ontario", 1.0), ("Lyon", 1.0), ("Detroit", 1.0)]),
    )?;

    let up = cube::rollup(&ds, &count, &country_map()).map_err(err)?;
    same(
        "roll-up count",
        up.cells(),
        oracle.group(|r| vec![country(&r[0]).to_string()], all, None),
        expect(&[("Canada", 4.0), ("France", 4.0), ("USA", 3.0)]),
    )?;
    let up_profit = cube::rollup(&ds, &profit, &country_map()).map_err(err)?;
    same(
        "roll-up profit",
        up_profit.cells(),
        oracle.group(|r| vec![country(&r[0]).to_string()], all, Some("profit")),
        expect(&[("Canada", 95.0), ("France", 45.0), ("USA", 30.0)]),
    )?;
    let up_shoe = cube::rollup(&ds, &shoe_cost, &country_map()).map_err(err)?;
    let down = cube::drilldown(&ds, &up_shoe, &country_map()).map_err(err)?;
    same(
        "drill-down after slice",
        down.cells(),
        oracle.by("location", is_shoe, Some("cost")),
        expect(&[("Montreal", 250.0), ("Paris", 220.0)]),
    )?;
    check!(
        down.query().filter.get("product").is_some() && down.query().groupings.is_empty(),
        "drill-down lost the slice or kept the grouping"
    );

    let count_q = CuboidQuery::new(loc.clone(), Aggregator::Count, None);
    let ice = build_iceberg(&ds, &loc, Aggregator::Count, None, 3).map_err(err)?;
    let ice_cells: BTreeMap<Vec<String>, f64> = ice.cells().iter().map(|c| (c.address.clone(), c.measure)).collect();
    same(
        "iceberg limit 3",
        &ice_cells,
        oracle.by("location", all, None).into_iter().filter(|(_, w)| *w >= 2.0).collect(),
        expect(&[("Paris", 3.0), ("Montreal", 2.0), ("New York", 2.0)]),
    )?;
    let approx = topk_iceberg(&ice, &count_q, 2).map_err(err)?;
    let exact2 = topk_exact(&ds, &count_q, 2).map_err(err)?;
    check!(tag_pairs(&approx) == pairs(&[("Paris", 3.0), ("Montreal", 2.0)]), "iceberg top-2 {:?}", tag_pairs(&approx));
    check!(
        fp_index(&approx, &exact2).map_err(err)? == 0.0 && fn_index(&approx, &exact2).map_err(err)? == 0.0,
        "iceberg top-2 indexes"
    );
    let top3 = topk_exact(&ds, &count_q, 3).map_err(err)?;
    check!(tag_pairs(&top3) == pairs(&[("Paris", 3.0), ("Montreal", 2.0), ("New York", 2.0)]), "top-3 {:?}", tag_pairs(&top3));
    let profit_q = CuboidQuery::new(loc.clone(), Aggregator::Sum, Some("profit".into()));
    let top2 = topk_exact(&ds, &profit_q, 2).map_err(err)?;
    check!(tag_pairs(&top2) == pairs(&[("Quebec", 45.0), ("Montreal", 40.0)]), "profit top-2 {:?}", tag_pairs(&top2));

    let cloud7 = tagcube_core::tagcloud::from_cuboid(&count, 7).map_err(err)?;
    check!(cloud7.len() == 7 && cloud7.tags()[0].weight == 3.0, "7-tag cloud");
    let cloud150 = tagcube_core::tagcloud::from_cuboid(&count, 150).map_err(err)?;
    check!(cloud150.len() == 7 && cloud150.bound() == 150, "default bound");
    check!(sort_cloud(&cloud7, SortKey::Weight, Direction::Descending).tags()[0].term == "Paris", "weight sort");
    check!(sort_cloud(&cloud7, SortKey::Term, Direction::Ascending).tags()[0].term == "Detroit", "term sort");
    let pruned: BTreeSet<String> = prune(&cloud7, Some(2.0), None).map_err(err)?.tags().iter().map(|t| t.term.clone()).collect();
    check!(pruned == s(&["Paris", "Montreal", "New York"]).into_iter().collect(), "prune {pruned:?}");

    let prod_dims = s(&["product"]);
    let prod_cloud = topk_exact(&ds, &CuboidQuery::new(prod_dims.clone(), Aggregator::Count, None), 150).map_err(err)?;
    for (term, hand) in [("shoe", vec![("Montreal", 2.0), ("Paris", 2.0)]), ("chair", vec![("New York", 2.0)])] {
        let tag = prod_cloud.get(term).unwrap();
        let v = subcuboid_vector(&ds, &prod_dims, tag, &loc, Aggregator::Count, None).map_err(err)?;
        let engine: BTreeMap<Vec<String>, f64> = v.axis.iter().cloned().zip(v.values.iter().copied()).collect();
        let mut from_oracle = oracle.by("location", |_| true, None);
        from_oracle.values_mut().for_each(|x| *x = 0.0);
        from_oracle.extend(oracle.by("location", |r| r[3] == term, None));
        let mut hand_full: BTreeMap<Vec<String>, f64> = locations.iter().map(|l| (vec![l.clone()], 0.0)).collect();
        hand_full.extend(expect(&hand));
        same(&format!("subcuboid vector {term}"), &engine, from_oracle, hand_full)?;
    }
    let m = similarity_matrix(
        CellSource::Facts(&ds),
        &CuboidQuery::new(prod_dims, Aggregator::Count, None),
        &prod_cloud,
        &loc,
        &Cosine,
    )
    .map_err(err)?;
    let (i, j) = (
        m.terms().iter().position(|t| t == "shoe").unwrap(),
        m.terms().iter().position(|t| t == "chair").unwrap(),
    );
    check!(m.get(i, j) == 0.0, "shoe/chair cosine {}", m.get(i, j));

    let engine = CloudEngine::new();
    let mut q = QueryDescriptor::new("table1", loc);
    q.k = 3;
    let r = engine.run(&ds, &q).map_err(err)?;
    check!(r.layout.terms() == ["Paris", "Montreal", "New York"], "service cloud {:?}", r.layout.terms());
    Ok("dictionaries, counts, sums, slices, dice, roll-ups, drill-down, iceberg, top-k, sorting, pruning, subcuboid vectors and the service cloud agree with hand values and the oracle".into())
}

// 8. Determinism ---------------------------------------------------------------------------

async fn service_body(app: &axum::Router, method: Method, uri: &str, body: String) -> (u16, String) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'Z', '0', ' ', '-', '_', ':', '|', ',', '"', '\\', '/', '\u{e9}', '\u{2013}', '\u{4e2d}', '\u{1f600}'];
    let len = rng.random_range(1..10);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> QueryDescriptor {
    let dims = (0..rng.random_range(1..4)).map(|_| random_text(rng)).collect();
    let mut q = QueryDescriptor::new(random_text(rng), dims);
    q.agg = *Aggregator::ALL.choose(rng).unwrap();
    q.measure = rng.random_bool(0.5).then(|| random_text(rng));
    for _ in 0..rng.random_range(0..3) {
        q.slices.insert(random_text(rng), random_text(rng));
    }
    for _ in 0..rng.random_range(0..3) {
        let set = (0..rng.random_range(1..4)).map(|_| random_text(rng)).collect();
        q.dices.insert(random_text(rng), set);
    }
    for _ in 0..rng.random_range(0..2) {
        let pairs: Vec<(String, String)> = (0..rng.random_range(0..4)).map(|_| (random_text(rng), random_text(rng))).collect();
        q.groupings.push(GroupingMap::new(random_text(rng), random_text(rng), pairs));
    }
    q.k = rng.random_range(1..=150);
    q.limit = rng.random_range(1..100_000);
    q.exact = rng.random();
    q.cluster = (0..rng.random_range(0..3)).map(|_| random_text(rng)).collect();
    q.similarity = ["cosine", "tanimoto", "jaccard"].choose(rng).unwrap().to_string();
    q.heuristic = ["nn", "brute", "pwmc:17", "mc:1000"].choose(rng).unwrap().to_string();
    q.seed = rng.random();
    q.buckets = rng.random_range(1..20);
    q
}

fn criterion_8() -> Outcome {
    let spec = SynthSpec {
        cardinalities: vec![30, 12, 8],
        facts: 5_000,
        zipf_s: 0.9,
        seed: 8,
    };
    let csv = generate(&spec).map_err(err)?.to_delimited(',').map_err(err)?;
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("determinism.csv");
    std::fs::write(&path, &csv).map_err(err)?;

    let app = router(Arc::new(AppState::new(CloudEngine::new())));
    let rt = tokio::runtime::Runtime::new().map_err(err)?;
    let (status, _) = rt.block_on(service_body(&app, Method::POST, "/datasets?name=det", csv));
    check!(status == 201, "upload status {status}");
    let schema = r#"{"dimensions":["d1","d2","d3"],"measures":["amount"]}"#.to_string();
    let (status, _) = rt.block_on(service_body(&app, Method::POST, "/datasets/det/schema", schema));
    check!(status == 200, "schema status {status}");

    let cases: [(&str, &[&str]); 4] = [
        ("dims=d1&cluster=d2&heuristic=pwmc:500&seed=42", &["--dims", "d1", "--cluster", "d2", "--heuristic", "pwmc:500", "--seed", "42"]),
        ("dims=d1&cluster=d2,d3&similarity=tanimoto&heuristic=mc:300&seed=7&k=40", &["--dims", "d1", "--cluster", "d2,d3", "--similarity", "tanimoto", "--heuristic", "mc:300", "--seed", "7", "--k", "40"]),
        ("dims=d2,d3&agg=sum&measure=amount&slice=d1:d1v03&limit=60", &["--dims", "d2,d3", "--agg", "sum", "--measure", "amount", "--slice", "d1:d1v03", "--limit", "60"]),
        ("dims=d1&agg=avg&measure=amount&cluster=d3&exact=true&heuristic=pwmc:1000&seed=3", &["--dims", "d1", "--agg", "avg", "--measure", "amount", "--cluster", "d3", "--exact", "--heuristic", "pwmc:1000", "--seed", "3"]),
    ];
    let mut runs = 0;
    for (query, flags) in cases {
        let uri = format!("/datasets/det/cloud?{query}");
        let (status, reference) = rt.block_on(service_body(&app, Method::GET, &uri, String::new()));
        check!(status == 200, "{query}: status {status}: {reference}");
        for _ in 0..10 {
            let (_, again) = rt.block_on(service_body(&app, Method::GET, &uri, String::new()));
            check!(again == reference, "{query}: service response changed");
            let out = Command::new(env!("CARGO_BIN_EXE_tagcube"))
                .arg("cloud")
                .arg(&path)
                .args(["--name", "det", "--measures", "amount"])
                .args(flags)
                .env("RUST_LOG", "off")
                .output()
                .map_err(err)?;
            check!(out.status.success(), "{query}: cli failed: {}", String::from_utf8_lossy(&out.stderr));
            check!(out.stdout == reference.as_bytes(), "{query}: cli output differs from service");
            runs += 1;
        }
        let token = serde_json::from_str::<serde_json::Value>(&reference).map_err(err)?["permalink"]
            .as_str()
            .unwrap()
            .to_string();
        let (_, via) = rt.block_on(service_body(&app, Method::GET, &format!("/c/{token}"), String::new()));
        check!(via == reference, "{query}: permalink response differs");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let q = random_descriptor(&mut rng);
        let token = q.encode();
        let back = QueryDescriptor::decode(&token).map_err(err)?;
        check!(back == q, "round trip changed {q:?}");
        check!(back.encode() == token, "re-encoding changed the token");
    }
    Ok(format!("{runs} service+CLI runs byte-identical across 4 descriptors; 1000 permalinks round-trip"))
}

fn main() {
    let started = Instant::now();
    let zipf = zipf_dataset();
    let criteria: Vec<Criterion> = vec![
        ("1 oracle equivalence", Box::new(criterion_1)),
        ("2 low-entropy quality", Box::new(|| criterion_2(&zipf))),
        ("3 iceberg speedup", Box::new(|| criterion_3(&zipf))),
        ("4 heuristic dominance", Box::new(criterion_4)),
        ("5 heuristic comparison", Box::new(criterion_5)),
        ("6 metric properties", Box::new(criterion_6)),
        ("7 table 1 micro-suite", Box::new(criterion_7)),
        ("8 determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        8 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
