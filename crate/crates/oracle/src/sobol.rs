//! The first three Sobol coordinates built by hand from the published
//! initial direction numbers (dimension 2: x + 1, m = 1; dimension 3:
//! x^2 + x + 1, m = 1, 3), in Gray-code order, without scrambling.

const BITS: usize = 30;

fn directions(dim: usize) -> Vec<u64> {
    let m: Vec<u64> = match dim {
        0 => (0..BITS).map(|_| 1).collect(),
        1 => {
            // m_k = 2 m_{k-1} xor m_{k-1}
            let mut m = vec![1u64];
            while m.len() < BITS {
                let p = *m.last().unwrap();
                m.push((p << 1) ^ p);
            }
            m
        }
        2 => {
            // m_k = 2 a m_{k-1} xor 4 m_{k-2} xor m_{k-2}, a = 1
            let mut m = vec![1u64, 3];
            while m.len() < BITS {
                let k = m.len();
                m.push((m[k - 1] << 1) ^ (m[k - 2] << 2) ^ m[k - 2]);
            }
            m
        }
        _ => panic!("only three dimensions are tabulated"),
    };
    m.iter()
        .enumerate()
        .map(|(k, mk)| mk << (BITS - 1 - k))
        .collect()
}

/// Point `index` (index 0 is the origin) in dimensions `0..dim`, `dim <= 3`.
pub fn point(dim: usize, index: u64) -> Vec<f64> {
    let gray = index ^ (index >> 1);
    (0..dim)
        .map(|d| {
            let v = directions(d);
            let mut x = 0u64;
            for (bit, vk) in v.iter().enumerate() {
                if gray >> bit & 1 == 1 {
                    x ^= vk;
                }
            }
            x as f64 / (1u64 << BITS) as f64
        })
        .collect()
}
