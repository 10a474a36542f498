mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use ctcl::corpus::{encode, tokenize, Corpus, Document, Provenance};
use ctcl::dp::{compose_and_convert, AccountantLedger};
use ctcl::model::{forward_loss, init_model, Mode, Parameters, TrainConfig};
use ctcl::pipeline::{
    finetune_condition, finetune_pairs, fit_private, pretrain_generator, pretraining_pairs,
    synthesize, train, DpConfig, HttpAspectClient, PretrainStyle, SynthesisConfig,
};

use common::*;

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

fn short_pretrain(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 100,
        ..pretrain_config(seed)
    }
}

#[test]
fn pretraining_loss_decreases() {
    let drops: Vec<f64> = (0..3)
        .map(|seed| {
            let t = toy(seed);
            let mc = model_config(Mode::EncoderDecoder, &t.vocab, seed);
            let out = pretrain_generator(
                &t.public,
                &t.embedder,
                &t.vocab,
                &mc,
                &short_pretrain(seed),
                PretrainStyle::Aspects,
                None,
            )
            .unwrap();
            let tail = &out.report.step_losses[90..];
            out.report.first_loss() - tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect();
    assert!(median(&drops) > 0.5, "median loss drop {}", median(&drops));
}

#[test]
fn disabled_privacy_is_plain_finetuning_on_the_exact_histogram() {
    let t = toy(0);
    let init = init_model(&model_config(Mode::EncoderDecoder, &t.vocab, 1)).unwrap();
    let config = TrainConfig {
        steps: 20,
        ..finetune_config(2, None)
    };
    let dp = DpConfig::with_sigma(0.0, 0.0);
    let fit = fit_private(
        &t.private,
        &t.topics,
        &t.embedder,
        &t.vocab,
        init.clone(),
        &config,
        &dp,
    )
    .unwrap();

    let (pairs, raw) = finetune_pairs(&t.private, &t.topics, &t.embedder, &t.vocab, 32, &dp);
    let mut reference = init;
    train(&mut reference, &pairs, &config).unwrap();
    assert_eq!(fit.params, reference);
    let exact: Vec<f64> = raw.counts.iter().map(|&c| c as f64).collect();
    assert_eq!(fit.histogram.noisy_counts, exact);
    assert!(fit.epsilon.is_infinite());
}

#[test]
fn zero_noise_runs_are_bit_identical() {
    let t = toy(1);
    let init = init_model(&model_config(Mode::EncoderDecoder, &t.vocab, 1)).unwrap();
    let config = TrainConfig {
        steps: 10,
        clip: Some(1.0),
        ..finetune_config(2, None)
    };
    let run = || {
        fit_private(
            &t.private,
            &t.topics,
            &t.embedder,
            &t.vocab,
            init.clone(),
            &config,
            &DpConfig::with_sigma(0.0, 10.0),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.params, b.params);
    assert_eq!(a.histogram, b.histogram);
}

#[test]
fn finetuning_is_independent_of_thread_count() {
    let t = toy(2);
    let init = init_model(&model_config(Mode::EncoderDecoder, &t.vocab, 1)).unwrap();
    let config = TrainConfig {
        steps: 10,
        ..finetune_config(2, Some(4.0))
    };
    let run = |n| {
        with_threads(n, || {
            fit_private(
                &t.private,
                &t.topics,
                &t.embedder,
                &t.vocab,
                init.clone(),
                &config,
                &DpConfig::with_target(4.0),
            )
            .unwrap()
        })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.params, b.params);
    assert_eq!(a.histogram, b.histogram);
}

#[test]
fn solved_budget_is_met_and_ledger_recomputes() {
    let t = toy(0);
    let init = init_model(&model_config(Mode::EncoderDecoder, &t.vocab, 1)).unwrap();
    let config = TrainConfig {
        steps: 300,
        batch_size: 64,
        ..finetune_config(2, Some(4.0))
    };
    let fit = fit_private(
        &t.private,
        &t.topics,
        &t.embedder,
        &t.vocab,
        init,
        &config,
        &DpConfig::with_target(4.0),
    )
    .unwrap();
    assert_eq!(t.private.len(), 2000);
    assert!(
        (3.999..=4.001).contains(&fit.epsilon),
        "epsilon {}",
        fit.epsilon
    );

    let json = serde_json::to_string(&fit.ledger).unwrap();
    let ledger: AccountantLedger = serde_json::from_str(&json).unwrap();
    assert!((compose_and_convert(&ledger, fit.delta).unwrap() - fit.epsilon).abs() < 1e-9);
}

/// Sum of token log-likelihoods of `text` under a keyword condition.
fn log_likelihood(t: &Toy, params: &Parameters, keywords: &[String], text: &str) -> f64 {
    let cond = encode(&t.vocab, &finetune_condition(keywords, None), 32).ids;
    let target = encode(&t.vocab, text, 32).ids;
    -forward_loss(params, &cond, &target).unwrap().loss * (target.len() - 1) as f64
}

#[test]
fn finetuned_generator_prefers_the_matching_topic_condition() {
    let t = toy(0);
    let pre = pretrain(&t, PretrainStyle::Aspects);
    let fit = fit(&t, &pre, Some(4.0), true);
    let a = topic_for_pool(&t.topics, 0);
    let b = 1 - a;
    let mut agree = 0;
    let mut total = 0;
    for doc in &t.test.documents {
        let pool = doc.true_topic.unwrap();
        let (own, other) = if pool == 0 { (a, b) } else { (b, a) };
        let gain = log_likelihood(&t, &fit.params, &t.topics.keywords[own], &doc.text)
            - log_likelihood(&t, &fit.params, &t.topics.keywords[other], &doc.text);
        agree += usize::from(gain > 0.0);
        total += 1;
    }
    let rate = agree as f64 / total as f64;
    assert!(
        rate > 0.9,
        "matching condition preferred for only {rate:.3} of test documents"
    );
}

/// Largest-remainder apportionment written out directly.
fn apportion(p: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = p.iter().map(|x| (x * n as f64) as usize).collect();
    let mut rest: Vec<(f64, usize)> = p
        .iter()
        .enumerate()
        .map(|(i, x)| (x * n as f64 - counts[i] as f64, i))
        .collect();
    rest.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let missing = n - counts.iter().sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

#[test]
fn synthesis_follows_the_plan_and_reproduces() {
    let t = toy(0);
    let init = init_model(&model_config(Mode::EncoderDecoder, &t.vocab, 1)).unwrap();
    let config = TrainConfig {
        steps: 5,
        ..finetune_config(2, Some(4.0))
    };
    let fit = fit_private(
        &t.private,
        &t.topics,
        &t.embedder,
        &t.vocab,
        init,
        &config,
        &DpConfig::with_target(4.0),
    )
    .unwrap();
    let sc = SynthesisConfig {
        sampler: sampler(),
        ..SynthesisConfig::new(101, 9)
    };
    let one = with_threads(1, || {
        synthesize(&fit.params, &t.vocab, &t.topics, &fit.histogram, &sc).unwrap()
    });
    let four = with_threads(4, || {
        synthesize(&fit.params, &t.vocab, &t.topics, &fit.histogram, &sc).unwrap()
    });
    assert_eq!(
        one.corpus.to_jsonl().unwrap(),
        four.corpus.to_jsonl().unwrap()
    );

    let clamped: Vec<f64> = fit.histogram.noisy_counts[..2]
        .iter()
        .map(|c| c.max(0.0))
        .collect();
    let total: f64 = clamped.iter().sum();
    let expected = apportion(&clamped.iter().map(|c| c / total).collect::<Vec<_>>(), 101);
    let observed: Vec<usize> = (0..2)
        .map(|k| {
            one.corpus
                .documents
                .iter()
                .filter(|d| d.true_topic == Some(k))
                .count()
        })
        .collect();
    assert_eq!(observed, expected);
    assert_eq!(one.plan.counts, expected);
    assert_eq!(one.corpus.provenance, Provenance::Synthetic);
    assert!(one
        .corpus
        .documents
        .iter()
        .all(|d| !d.text.trim().is_empty()));
}

#[test]
fn synthetic_documents_stay_on_topic() {
    let rates: Vec<f64> = (0..3)
        .map(|seed| {
            let t = toy(seed);
            let fit = fit(&t, &pretrain(&t, PretrainStyle::Aspects), None, true);
            let a = topic_for_pool(&t.topics, 0);
            let docs = synth(&t, &fit, 400, true).corpus;
            let topic_a: Vec<&Document> = docs
                .documents
                .iter()
                .filter(|d| d.true_topic == Some(a))
                .collect();
            let on_topic = topic_a
                .iter()
                .filter(|d| {
                    let words = tokenize(&d.text);
                    let hits = words.iter().filter(|w| pool_of(w) == Some(0)).count();
                    hits as f64 > 0.6 * words.len() as f64
                })
                .count();
            on_topic as f64 / topic_a.len() as f64
        })
        .collect();
    assert!(median(&rates) >= 0.8, "on-topic rates {rates:?}");
}

/// Answers every request on `listener` with `body` as a 200 JSON reply.
fn stub_server(listener: TcpListener, body: &'static str) {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut request = vec![0; length];
            let _ = reader.read_exact(&mut request);
            let reply = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
}

fn client_for(body: &'static str) -> HttpAspectClient {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    stub_server(listener, body);
    HttpAspectClient::new(url)
}

fn small_public() -> Corpus {
    let t = toy(0);
    Corpus::new(t.public.documents[..20].to_vec(), Provenance::Public)
}

#[test]
fn malformed_service_replies_fall_back_to_rule_based_aspects() {
    let t = toy(0);
    let public = small_public();
    let (reference, none) = pretraining_pairs(
        &public,
        &t.embedder,
        &t.vocab,
        32,
        PretrainStyle::Aspects,
        0,
        None,
    );
    assert!(none.is_empty());
    for body in [r#"{"text": "no labelled lines here"}"#, "not json at all"] {
        let client = client_for(body);
        let (pairs, fallbacks) = pretraining_pairs(
            &public,
            &t.embedder,
            &t.vocab,
            32,
            PretrainStyle::Aspects,
            0,
            Some(&client),
        );
        assert_eq!(pairs, reference);
        assert_eq!(fallbacks.len(), public.len());
        assert!(fallbacks
            .iter()
            .map(|f| &f.0)
            .eq(public.documents.iter().map(|d| &d.id)));
    }
}

#[test]
fn well_formed_service_replies_are_used() {
    let t = toy(0);
    let public = small_public();
    let client = client_for(r#"{"text": "Document Type: abstract\nKeywords: t0w1, t1w2"}"#);
    let (pairs, fallbacks) = pretraining_pairs(
        &public,
        &t.embedder,
        &t.vocab,
        32,
        PretrainStyle::Aspects,
        0,
        Some(&client),
    );
    assert!(fallbacks.is_empty());
    let expected = encode(
        &t.vocab,
        "Document Type: abstract\nKeywords: t0w1, t1w2",
        32,
    )
    .ids;
    assert!(pairs.iter().all(|p| p.condition == expected));
}

#[test]
fn unreachable_service_falls_back() {
    let t = toy(0);
    let public = small_public();
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let client = HttpAspectClient::new(format!("http://127.0.0.1:{port}"));
    let (_, fallbacks) = pretraining_pairs(
        &public,
        &t.embedder,
        &t.vocab,
        32,
        PretrainStyle::Aspects,
        0,
        Some(&client),
    );
    assert_eq!(fallbacks.len(), public.len());
}

#[test]
fn ledger_counts_both_releases() {
    let t = toy(0);
    let init = init_model(&model_config(Mode::EncoderDecoder, &t.vocab, 1)).unwrap();
    let config = TrainConfig {
        steps: 3,
        ..finetune_config(2, Some(4.0))
    };
    let fit = fit_private(
        &t.private,
        &t.topics,
        &t.embedder,
        &t.vocab,
        init,
        &config,
        &DpConfig::with_target(4.0),
    )
    .unwrap();
    assert_eq!(fit.ledger.events().len(), 2);
    let json = serde_json::to_value(&fit.ledger).unwrap();
    assert_eq!(json["events"][0]["kind"], "gaussian");
    assert_eq!(json["events"][1]["kind"], "subsampled_gaussian");
    assert_eq!(json["events"][1]["steps"], 3);
}
