//! Single-file reference implementations of the cryptographic builtins.
//! Written for clarity and measurability, not for side-channel resistance.

use std::sync::OnceLock;

const SHA256_K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

const SHA256_IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

fn sha256_compress(state: &mut [u32; 8], block: &[u8]) {
    let mut w = [0u32; 64];
    for (i, chunk) in block.chunks_exact(4).enumerate() {
        w[i] = u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    for i in 16..64 {
        let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
        let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
        w[i] = w[i - 16]
            .wrapping_add(s0)
            .wrapping_add(w[i - 7])
            .wrapping_add(s1);
    }
    let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut h] = *state;
    for i in 0..64 {
        let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
        let ch = (e & f) ^ (!e & g);
        let t1 = h
            .wrapping_add(s1)
            .wrapping_add(ch)
            .wrapping_add(SHA256_K[i])
            .wrapping_add(w[i]);
        let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
        let maj = (a & b) ^ (a & c) ^ (b & c);
        let t2 = s0.wrapping_add(maj);
        h = g;
        g = f;
        f = e;
        e = d.wrapping_add(t1);
        d = c;
        c = b;
        b = a;
        a = t1.wrapping_add(t2);
    }
    for (s, v) in state.iter_mut().zip([a, b, c, d, e, f, g, h]) {
        *s = s.wrapping_add(v);
    }
}

pub fn sha256(message: &[u8]) -> [u8; 32] {
    let mut state = SHA256_IV;
    let mut blocks = message.chunks_exact(64);
    for block in &mut blocks {
        sha256_compress(&mut state, block);
    }
    let rest = blocks.remainder();
    let mut tail = [0u8; 128];
    tail[..rest.len()].copy_from_slice(rest);
    tail[rest.len()] = 0x80;
    let tail_len = if rest.len() < 56 { 64 } else { 128 };
    let bits = (message.len() as u64).wrapping_mul(8);
    tail[tail_len - 8..tail_len].copy_from_slice(&bits.to_be_bytes());
    for block in tail[..tail_len].chunks_exact(64) {
        sha256_compress(&mut state, block);
    }
    let mut out = [0u8; 32];
    for (chunk, word) in out.chunks_exact_mut(4).zip(state) {
        chunk.copy_from_slice(&word.to_be_bytes());
    }
    out
}

pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut block_key = [0u8; 64];
    if key.len() > 64 {
        block_key[..32].copy_from_slice(&sha256(key));
    } else {
        block_key[..key.len()].copy_from_slice(key);
    }
    let mut inner = Vec::with_capacity(64 + message.len());
    inner.extend(block_key.iter().map(|b| b ^ 0x36));
    inner.extend_from_slice(message);
    let inner_hash = sha256(&inner);
    let mut outer = Vec::with_capacity(96);
    outer.extend(block_key.iter().map(|b| b ^ 0x5c));
    outer.extend_from_slice(&inner_hash);
    sha256(&outer)
}

struct SBoxes {
    forward: [u8; 256],
    inverse: [u8; 256],
}

fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

fn sboxes() -> &'static SBoxes {
    static BOXES: OnceLock<SBoxes> = OnceLock::new();
    BOXES.get_or_init(|| {
        let mut forward = [0u8; 256];
        let mut inverse = [0u8; 256];
        for x in 0..=255u8 {
            let inv = if x == 0 {
                0
            } else {
                (1..=255u8).find(|&y| gf_mul(x, y) == 1).unwrap_or(0)
            };
            let s = inv
                ^ inv.rotate_left(1)
                ^ inv.rotate_left(2)
                ^ inv.rotate_left(3)
                ^ inv.rotate_left(4)
                ^ 0x63;
            forward[x as usize] = s;
            inverse[s as usize] = x;
        }
        SBoxes { forward, inverse }
    })
}

/// AES block cipher with an expanded key schedule (128, 192 or 256 bit keys).
#[derive(Clone)]
pub struct Aes {
    round_keys: Vec<[u8; 16]>,
}

impl Aes {
    /// Returns `None` unless `key` is 16, 24 or 32 bytes long.
    pub fn new(key: &[u8]) -> Option<Self> {
        let nk = match key.len() {
            16 | 24 | 32 => key.len() / 4,
            _ => return None,
        };
        let rounds = nk + 6;
        let sbox = &sboxes().forward;
        let total = 4 * (rounds + 1);
        let mut words: Vec<[u8; 4]> = key
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        let mut rcon = 1u8;
        for i in nk..total {
            let mut t = words[i - 1];
            if i % nk == 0 {
                t.rotate_left(1);
                t.iter_mut().for_each(|b| *b = sbox[*b as usize]);
                t[0] ^= rcon;
                rcon = gf_mul(rcon, 2);
            } else if nk > 6 && i % nk == 4 {
                t.iter_mut().for_each(|b| *b = sbox[*b as usize]);
            }
            let prev = words[i - nk];
            words.push([prev[0] ^ t[0], prev[1] ^ t[1], prev[2] ^ t[2], prev[3] ^ t[3]]);
        }
        let round_keys = words
            .chunks_exact(4)
            .map(|w| {
                let mut k = [0u8; 16];
                for (j, word) in w.iter().enumerate() {
                    k[4 * j..4 * j + 4].copy_from_slice(word);
                }
                k
            })
            .collect();
        Some(Aes { round_keys })
    }

    fn rounds(&self) -> usize {
        self.round_keys.len() - 1
    }

    pub fn encrypt_block(&self, block: &mut [u8; 16]) {
        let sbox = &sboxes().forward;
        add_round_key(block, &self.round_keys[0]);
        for r in 1..=self.rounds() {
            block.iter_mut().for_each(|b| *b = sbox[*b as usize]);
            shift_rows(block);
            if r != self.rounds() {
                mix_columns(block);
            }
            add_round_key(block, &self.round_keys[r]);
        }
    }

    pub fn decrypt_block(&self, block: &mut [u8; 16]) {
        let inv = &sboxes().inverse;
        add_round_key(block, &self.round_keys[self.rounds()]);
        for r in (0..self.rounds()).rev() {
            inv_shift_rows(block);
            block.iter_mut().for_each(|b| *b = inv[*b as usize]);
            add_round_key(block, &self.round_keys[r]);
            if r != 0 {
                inv_mix_columns(block);
            }
        }
    }
}

fn add_round_key(block: &mut [u8; 16], key: &[u8; 16]) {
    block.iter_mut().zip(key).for_each(|(b, k)| *b ^= k);
}

// State is column-major: byte index = 4 * column + row.
fn shift_rows(s: &mut [u8; 16]) {
    let t = *s;
    for c in 0..4 {
        for r in 0..4 {
            s[4 * c + r] = t[4 * ((c + r) % 4) + r];
        }
    }
}

fn inv_shift_rows(s: &mut [u8; 16]) {
    let t = *s;
    for c in 0..4 {
        for r in 0..4 {
            s[4 * ((c + r) % 4) + r] = t[4 * c + r];
        }
    }
}

fn mix_columns(s: &mut [u8; 16]) {
    for col in s.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        col[0] = gf_mul(a0, 2) ^ gf_mul(a1, 3) ^ a2 ^ a3;
        col[1] = a0 ^ gf_mul(a1, 2) ^ gf_mul(a2, 3) ^ a3;
        col[2] = a0 ^ a1 ^ gf_mul(a2, 2) ^ gf_mul(a3, 3);
        col[3] = gf_mul(a0, 3) ^ a1 ^ a2 ^ gf_mul(a3, 2);
    }
}

fn inv_mix_columns(s: &mut [u8; 16]) {
    for col in s.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        col[0] = gf_mul(a0, 14) ^ gf_mul(a1, 11) ^ gf_mul(a2, 13) ^ gf_mul(a3, 9);
        col[1] = gf_mul(a0, 9) ^ gf_mul(a1, 14) ^ gf_mul(a2, 11) ^ gf_mul(a3, 13);
        col[2] = gf_mul(a0, 13) ^ gf_mul(a1, 9) ^ gf_mul(a2, 14) ^ gf_mul(a3, 11);
        col[3] = gf_mul(a0, 11) ^ gf_mul(a1, 13) ^ gf_mul(a2, 9) ^ gf_mul(a3, 14);
    }
}

fn blocks(data: &[u8]) -> impl Iterator<Item = [u8; 16]> + '_ {
    data.chunks(16).map(|c| {
        let mut b = [0u8; 16];
        b[..c.len()].copy_from_slice(c);
        b
    })
}

/// ECB over zero-padded input.
pub fn aes_ecb_encrypt(aes: &Aes, data: &[u8]) -> Vec<u8> {
    blocks(data)
        .flat_map(|mut b| {
            aes.encrypt_block(&mut b);
            b
        })
        .collect()
}

/// `data` length must be a multiple of 16.
pub fn aes_ecb_decrypt(aes: &Aes, data: &[u8]) -> Vec<u8> {
    blocks(data)
        .flat_map(|mut b| {
            aes.decrypt_block(&mut b);
            b
        })
        .collect()
}

/// CTR mode with a 128-bit big-endian counter block starting at `iv`.
pub fn aes_ctr(aes: &Aes, iv: &[u8; 16], data: &[u8]) -> Vec<u8> {
    let mut counter = u128::from_be_bytes(*iv);
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(16) {
        let mut ks = counter.to_be_bytes();
        aes.encrypt_block(&mut ks);
        out.extend(chunk.iter().zip(ks).map(|(d, k)| d ^ k));
        counter = counter.wrapping_add(1);
    }
    out
}

/// CBC over zero-padded input.
pub fn aes_cbc_encrypt(aes: &Aes, iv: &[u8; 16], data: &[u8]) -> Vec<u8> {
    let mut chain = *iv;
    let mut out = Vec::with_capacity(data.len().div_ceil(16) * 16);
    for mut b in blocks(data) {
        b.iter_mut().zip(chain).for_each(|(x, c)| *x ^= c);
        aes.encrypt_block(&mut b);
        out.extend_from_slice(&b);
        chain = b;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    fn block(s: &str) -> [u8; 16] {
        hex(s).try_into().unwrap()
    }

    #[test]
    fn sbox_spot_values() {
        let s = sboxes();
        assert_eq!(s.forward[0x00], 0x63);
        assert_eq!(s.forward[0x53], 0xed);
        assert_eq!(s.inverse[0x63], 0x00);
    }

    #[test]
    fn fips197_known_answers() {
        let pt = "00112233445566778899aabbccddeeff";
        let cases = [
            ("000102030405060708090a0b0c0d0e0f", "69c4e0d86a7b0430d8cdb78070b4c55a"),
            (
                "000102030405060708090a0b0c0d0e0f1011121314151617",
                "dda97ca4864cdfe06eaf70a0ec0d7191",
            ),
            (
                "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f",
                "8ea2b7ca516745bfeafc49904b496089",
            ),
        ];
        for (key, ct) in cases {
            let aes = Aes::new(&hex(key)).unwrap();
            let mut b = block(pt);
            aes.encrypt_block(&mut b);
            assert_eq!(b, block(ct), "key {key}");
            aes.decrypt_block(&mut b);
            assert_eq!(b, block(pt));
        }
        let aes = Aes::new(&hex("2b7e151628aed2a6abf7158809cf4f3c")).unwrap();
        let mut b = block("3243f6a8885a308d313198a2e0370734");
        aes.encrypt_block(&mut b);
        assert_eq!(b, block("3925841d02dc09fbdc118597196a0b32"));
    }

    #[test]
    fn sp800_38a_ctr_and_cbc() {
        let aes = Aes::new(&hex("2b7e151628aed2a6abf7158809cf4f3c")).unwrap();
        let pt = hex("6bc1bee22e409f96e93d7e117393172a");
        let ctr_iv = block("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff");
        assert_eq!(aes_ctr(&aes, &ctr_iv, &pt), hex("874d6191b620e3261bef6864990db6ce"));
        let cbc_iv = block("000102030405060708090a0b0c0d0e0f");
        assert_eq!(aes_cbc_encrypt(&aes, &cbc_iv, &pt), hex("7649abac8119b246cee98e9b12e9197d"));
    }

    #[test]
    fn rejects_bad_key_sizes() {
        assert!(Aes::new(&[0u8; 15]).is_none());
        assert!(Aes::new(&[0u8; 33]).is_none());
    }

    #[test]
    fn sha256_vectors() {
        assert_eq!(
            sha256(b"").to_vec(),
            hex("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
        );
        assert_eq!(
            sha256(b"abc").to_vec(),
            hex("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        assert_eq!(
            sha256(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq").to_vec(),
            hex("248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1")
        );
    }

    #[test]
    fn hmac_rfc4231_case_one_and_two() {
        assert_eq!(
            hmac_sha256(&[0x0b; 20], b"Hi There").to_vec(),
            hex("b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7")
        );
        assert_eq!(
            hmac_sha256(b"Jefe", b"what do ya want for nothing?").to_vec(),
            hex("5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843")
        );
    }
}
