//! Non-cryptographic builtin kernels.

pub fn words(data: &[u8]) -> Vec<u32> {
    data.chunks(4)
        .map(|c| {
            let mut b = [0u8; 4];
            b[..c.len()].copy_from_slice(c);
            u32::from_le_bytes(b)
        })
        .collect()
}

pub fn quicksort(v: &mut [u32]) {
    if v.len() <= 1 {
        return;
    }
    let pivot = v[(v.len() - 1) / 2];
    let (mut i, mut j) = (0usize, v.len() - 1);
    loop {
        while v[i] < pivot {
            i += 1;
        }
        while v[j] > pivot {
            j -= 1;
        }
        if i >= j {
            break;
        }
        v.swap(i, j);
        i += 1;
        j -= 1;
    }
    let (left, right) = v.split_at_mut(j + 1);
    quicksort(left);
    quicksort(right);
}

pub fn insertion_sort(v: &mut [u32]) {
    for i in 1..v.len() {
        let x = v[i];
        let mut j = i;
        while j > 0 && v[j - 1] > x {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
    }
}

/// Multiplies two `n x n` matrices built from the input bytes.
pub fn matrix_multiply(data: &[u8]) -> Vec<f64> {
    let n = ((data.len() / 2) as f64).sqrt().clamp(2.0, 24.0) as usize;
    let at = |k: usize| f64::from(data[k % data.len().max(1)]);
    let a: Vec<f64> = (0..n * n).map(at).collect();
    let b: Vec<f64> = (0..n * n).map(|k| at(data.len() + n * n - k)).collect();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn crc32_table() -> &'static [u32; 256] {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    })
}

/// CRC-32 (ISO-HDLC, reflected polynomial 0xEDB88320), table driven.
pub fn crc32(data: &[u8]) -> u32 {
    let table = crc32_table();
    !data.iter().fold(!0u32, |crc, &b| {
        table[((crc ^ u32::from(b)) & 0xff) as usize] ^ (crc >> 8)
    })
}

pub fn adler32(data: &[u8]) -> u32 {
    const MOD: u32 = 65521;
    let (mut a, mut b) = (1u32, 0u32);
    for &x in data {
        a = (a + u32::from(x)) % MOD;
        b = (b + a) % MOD;
    }
    (b << 16) | a
}

/// Naive doubly recursive Fibonacci.
pub fn fibonacci(n: u32) -> u64 {
    if n < 2 {
        u64::from(n)
    } else {
        fibonacci(n - 1) + fibonacci(n - 2)
    }
}

/// In-place iterative radix-2 FFT over interleaved `(re, im)` pairs.
/// `re.len()` must be a power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two() && im.len() == n);
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let angle = -2.0 * std::f64::consts::PI / len as f64;
        let (w_re, w_im) = (angle.cos(), angle.sin());
        for start in (0..n).step_by(len) {
            let (mut cur_re, mut cur_im) = (1.0, 0.0);
            for k in 0..len / 2 {
                let (a, b) = (start + k, start + k + len / 2);
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next;
            }
        }
        len <<= 1;
    }
}

/// FFT over the largest power-of-two prefix of the input bytes (min 8).
pub fn fft_bytes(data: &[u8]) -> Vec<f64> {
    let n = if data.len() < 8 {
        8
    } else {
        1 << (usize::BITS - 1 - data.len().leading_zeros())
    };
    let mut re: Vec<f64> = (0..n).map(|i| f64::from(*data.get(i).unwrap_or(&0))).collect();
    let mut im = vec![0.0; n];
    fft(&mut re, &mut im);
    re.into_iter().chain(im).collect()
}

const B64: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

pub fn base64_encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [chunk[0], *chunk.get(1).unwrap_or(&0), *chunk.get(2).unwrap_or(&0)];
        let n = (u32::from(b[0]) << 16) | (u32::from(b[1]) << 8) | u32::from(b[2]);
        out.push(B64[(n >> 18) as usize & 63]);
        out.push(B64[(n >> 12) as usize & 63]);
        out.push(if chunk.len() > 1 { B64[(n >> 6) as usize & 63] } else { b'=' });
        out.push(if chunk.len() > 2 { B64[n as usize & 63] } else { b'=' });
    }
    out
}

/// Decodes standard padded base64; `None` on malformed input.
pub fn base64_decode(text: &[u8]) -> Option<Vec<u8>> {
    if !text.len().is_multiple_of(4) {
        return None;
    }
    let value = |c: u8| -> Option<u32> {
        Some(match c {
            b'A'..=b'Z' => c - b'A',
            b'a'..=b'z' => c - b'a' + 26,
            b'0'..=b'9' => c - b'0' + 52,
            b'+' => 62,
            b'/' => 63,
            _ => return None,
        } as u32)
    };
    let mut out = Vec::with_capacity(text.len() / 4 * 3);
    for chunk in text.chunks(4) {
        let pad = chunk.iter().rev().take_while(|&&c| c == b'=').count();
        if pad > 2 {
            return None;
        }
        let mut n = 0u32;
        for &c in &chunk[..4 - pad] {
            n = (n << 6) | value(c)?;
        }
        n <<= 6 * pad as u32;
        let bytes = [(n >> 16) as u8, (n >> 8) as u8, n as u8];
        out.extend_from_slice(&bytes[..3 - pad]);
    }
    Some(out)
}

/// Generates `count` xorshift64 outputs from `seed` and folds them.
pub fn xorshift(seed: u64, count: usize) -> Vec<u64> {
    let mut x = seed | 1;
    (0..count)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_agree_with_std() {
        let data: Vec<u8> = (0..=255u8).rev().cycle().take(1000).collect();
        let mut expect = words(&data);
        expect.sort_unstable();
        let mut q = words(&data);
        quicksort(&mut q);
        let mut ins = words(&data);
        insertion_sort(&mut ins);
        assert_eq!(q, expect);
        assert_eq!(ins, expect);
    }

    proptest::proptest! {
        #[test]
        fn quicksort_sorts(mut v in proptest::collection::vec(0u32..50, 0..200)) {
            let mut expect = v.clone();
            expect.sort_unstable();
            quicksort(&mut v);
            proptest::prop_assert_eq!(v, expect);
        }
    }

    #[test]
    fn adler32_reference() {
        assert_eq!(adler32(b"Wikipedia"), 0x11E6_0398);
    }

    #[test]
    fn fibonacci_values() {
        assert_eq!(fibonacci(0), 0);
        assert_eq!(fibonacci(10), 55);
        assert_eq!(fibonacci(20), 6765);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let data: Vec<u8> = (0..16u8).map(|i| i.wrapping_mul(37)).collect();
        let out = fft_bytes(&data);
        let n = 16;
        for k in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in data.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += f64::from(x) * a.cos();
                im += f64::from(x) * a.sin();
            }
            assert!((out[k] - re).abs() < 1e-9);
            assert!((out[n + k] - im).abs() < 1e-9);
        }
    }

    #[test]
    fn base64_rfc4648_vectors() {
        let cases: [(&[u8], &[u8]); 7] = [
            (b"", b""),
            (b"f", b"Zg=="),
            (b"fo", b"Zm8="),
            (b"foo", b"Zm9v"),
            (b"foob", b"Zm9vYg=="),
            (b"fooba", b"Zm9vYmE="),
            (b"foobar", b"Zm9vYmFy"),
        ];
        for (plain, enc) in cases {
            assert_eq!(base64_encode(plain), enc);
            assert_eq!(base64_decode(enc).unwrap(), plain);
        }
        assert!(base64_decode(b"Zm9").is_none());
        assert!(base64_decode(b"Zm9*").is_none());
    }

    #[test]
    fn matrix_multiply_square() {
        let data = vec![1u8; 32];
        let c = matrix_multiply(&data);
        assert_eq!(c.len(), 16);
        assert!(c.iter().all(|&x| x == 4.0));
    }
}
