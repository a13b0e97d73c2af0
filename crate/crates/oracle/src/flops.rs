//! FLOPs ratio computed the way one would in a spreadsheet: parse the
//! descriptor text, tabulate surviving input (`n`) and output (`c`) channels
//! per layer, and sum `n' * c' * k^2 * h * w`. A depthwise layer has `n = 1`
//! input channel per group, so only its channel count `c` shrinks.

struct Row {
    kind: String,
    n: f64,
    c: f64,
    k: f64,
    h: f64,
    w: f64,
    prunable: bool,
    producer: Option<usize>,
}

fn rows(text: &str) -> Vec<Row> {
    text.lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty() && !l.starts_with("name"))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            Row {
                kind: f[1].to_string(),
                n: f[2].parse().unwrap(),
                c: f[3].parse().unwrap(),
                k: f[4].parse().unwrap(),
                h: f[5].parse().unwrap(),
                w: f[6].parse().unwrap(),
                prunable: f[7] == "yes",
                producer: f[8].parse().ok(),
            }
        })
        .collect()
}

/// Surviving fraction of layer `i`'s output channels.
fn kept(rows: &[Row], ratios: &[Option<f64>], i: usize) -> f64 {
    match ratios[i] {
        Some(r) => r,
        None if rows[i].kind == "dw" => rows[i].producer.map_or(1.0, |p| kept(rows, ratios, p)),
        None => 1.0,
    }
}

/// `pruned FLOPs / original FLOPs` for a descriptor in text form and one
/// ratio per prunable layer in file order.
pub fn ratio(descriptor: &str, policy: &[f64]) -> f64 {
    let rows = rows(descriptor);
    let mut next = policy.iter();
    let ratios: Vec<Option<f64>> = rows
        .iter()
        .map(|r| {
            if r.prunable {
                Some(*next.next().unwrap())
            } else {
                None
            }
        })
        .collect();
    assert!(
        next.next().is_none(),
        "policy longer than prunable layer count"
    );
    let (mut before, mut after) = (0.0, 0.0);
    for (i, r) in rows.iter().enumerate() {
        let area = r.k * r.k * r.h * r.w;
        let c_out = r.c * kept(&rows, &ratios, i);
        let n_in = if r.kind == "dw" {
            r.n
        } else {
            r.n * r.producer.map_or(1.0, |p| kept(&rows, &ratios, p))
        };
        before += r.n * r.c * area;
        after += n_in * c_out * area;
    }
    after / before
}
