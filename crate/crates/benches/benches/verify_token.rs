// SPDX-License-Identifier: Apache-2.0

//! Attestation-token hot paths: issuing, byte codec, and the accept and
//! reject branches of verification.

use criterion::{criterion_group, criterion_main, Criterion};

use ccabench_core::crypto::{sha256, HmacKey};
use ccabench_core::realm::verify_token;
use ccabench_core::{
    AttestationToken, GranuleProtectionTable, Measurement, Nonce, PlatformClaims,
    RealmDescriptor, UsagePolicy, Verdict,
};

struct Setup {
    realm: RealmDescriptor,
    platform: PlatformClaims,
    key: HmacKey,
    nonce: Nonce,
    token: AttestationToken,
}

fn setup() -> Setup {
    let mut gpt = GranuleProtectionTable::new(8);
    let mut realm = RealmDescriptor::create(b"bench image", UsagePolicy::unlimited());
    realm.populate(&mut gpt, 0, 0, b"kernel page").unwrap();
    realm.populate(&mut gpt, 1, 1, b"fs page").unwrap();
    realm.activate().unwrap();

    let platform = PlatformClaims {
        monitor_digest: Measurement(sha256(b"monitor fw")),
        rmm_digest: Measurement(sha256(b"rmm fw")),
    };
    let key = HmacKey::new(*b"benchmark attestation key 000001");
    let nonce = Nonce([7u8; 16]);
    let token = realm.attest(nonce, &platform, &key).unwrap();
    Setup {
        realm,
        platform,
        key,
        nonce,
        token,
    }
}

fn bench_issue(c: &mut Criterion) {
    let s = setup();
    c.bench_function("attest_issue_token", |b| {
        b.iter(|| s.realm.attest(s.nonce, &s.platform, &s.key).unwrap());
    });
}

fn bench_codec(c: &mut Criterion) {
    let s = setup();
    let bytes = s.token.to_bytes();
    c.bench_function("token_to_bytes", |b| b.iter(|| s.token.to_bytes()));
    c.bench_function("token_from_bytes", |b| {
        b.iter(|| AttestationToken::from_bytes(&bytes).unwrap());
    });
}

fn bench_verify(c: &mut Criterion) {
    let s = setup();
    let expected = s.realm.measurement();

    c.bench_function("verify_token_accept", |b| {
        b.iter(|| {
            let verdict = verify_token(&s.token, expected, &s.platform, s.nonce, &s.key);
            assert_eq!(verdict, Verdict::Accept);
            verdict
        });
    });

    let mut tampered = s.token.clone();
    tampered.signature[0] ^= 0xff;
    c.bench_function("verify_token_reject_bad_signature", |b| {
        b.iter(|| {
            let verdict = verify_token(&tampered, expected, &s.platform, s.nonce, &s.key);
            assert!(matches!(verdict, Verdict::Reject(_)));
            verdict
        });
    });
}

criterion_group!(benches, bench_issue, bench_codec, bench_verify);
criterion_main!(benches);
