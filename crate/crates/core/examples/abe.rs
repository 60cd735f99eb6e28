//! Encrypt under a policy, issue keys for two holders and decrypt. Also
//! shows the epoch rule: a key for epoch k opens ciphertexts of epoch <= k.
//!
//! ```sh
//! cargo run --example abe
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use aabac::abe::{decrypt, encrypt, keygen, setup, CiphertextPolicy, EncryptedObject, Mode};
use aabac::name;
use aabac::policy::{parse_policy, AttributeSet};

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (params, master) = setup([1; 32]);
    println!("public key name: {}", params.pubkey_name);

    let policy = CiphertextPolicy::new(parse_policy("PI = Tom and (Role = PI or Role = Graduate Student)").unwrap());
    let obj = encrypt(&params, &master, &policy, b"ACGTTGCA", 10, Mode::Direct, &mut rng).unwrap();
    let wire = obj.to_bytes();
    println!("ciphertext: {} bytes for 8 bytes of plaintext", wire.len());
    let obj = EncryptedObject::from_bytes(&wire).unwrap();

    let alice = AttributeSet::parse_canonical(["PI=Tom", "Role=Graduate Student"]).unwrap();
    let mallory = AttributeSet::parse_canonical(["PI=Jane", "Role=Graduate Student"]).unwrap();
    for (who, attrs, epoch) in [("alice", &alice, 10), ("alice", &alice, 9), ("alice", &alice, 12), ("mallory", &mallory, 10)] {
        let key = keygen(&master, &name!("/tntech").child(aabac::naming::Component::plain(who)), attrs, epoch, 0).unwrap();
        match decrypt(&key, &obj) {
            Ok(pt) => println!("{who} @ epoch {epoch}: {}", String::from_utf8_lossy(&pt)),
            Err(e) => println!("{who} @ epoch {epoch}: {e}"),
        }
    }

    let hybrid = encrypt(&params, &master, &policy, &[0u8; 4096], 10, Mode::Hybrid, &mut rng).unwrap();
    println!(
        "hybrid: header {} bytes, body {} bytes",
        hybrid.header.to_bytes().len(),
        hybrid.body.to_bytes().len()
    );
}
