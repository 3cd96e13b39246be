//! Recognition dumps, CER scoring, channel-configuration tables and
//! oracle-mask enhancement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::autodiff::complex::ComplexTensor;
use crate::autodiff::Graph;
use crate::beamformer::{estimate_psd, filter_and_sum, mvdr_filter, BeamformerKind, BeamformingFilter, DiagLoading};
use crate::corpus::{oracle_masks, Utterance};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParameterStore;
use crate::recognizer::metrics::edit_distance;
use crate::signal::{power_spectrum, stft, StftParams};
use crate::tensor::Tensor;
use crate::train::Example;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub id: String,
    pub score: f64,
    pub text: String,
}

pub fn recognize_all(model: &Model, store: &ParameterStore, examples: &[Example]) -> Result<Vec<Hypothesis>> {
    examples
        .iter()
        .map(|ex| {
            let r = model.recognize(store, &ex.stft)?;
            Ok(Hypothesis {
                id: ex.id.clone(),
                score: r.score,
                text: model.vocab.decode(&r.tokens),
            })
        })
        .collect()
}

/// Tab-separated `id, score, text`, one line per utterance.
pub fn render_hypotheses(hyps: &[Hypothesis]) -> String {
    let mut s = String::new();
    for h in hyps {
        writeln!(s, "{}\t{}\t{}", h.id, h.score, h.text).expect("string write");
    }
    s
}

pub fn parse_hypotheses(text: &str) -> Result<Vec<Hypothesis>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let mut f = line.splitn(3, '\t');
            let bad = || Error::Format(format!("hypothesis line {}: expected id, score, text", i + 1));
            let id = f.next().ok_or_else(bad)?;
            let score = f.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok(Hypothesis {
                id: id.to_string(),
                score,
                text: f.next().unwrap_or("").to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub edits: usize,
    pub ref_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CerReport {
    pub utterances: Vec<UtteranceScore>,
    pub edits: usize,
    pub ref_len: usize,
}

impl CerReport {
    /// Total edits over total reference characters.
    pub fn cer(&self) -> f64 {
        self.edits as f64 / self.ref_len as f64
    }

    pub fn render_details(&self) -> String {
        let mut s = String::from("id\tedits\tref_len\tcer\n");
        for u in &self.utterances {
            writeln!(s, "{}\t{}\t{}\t{:.4}", u.id, u.edits, u.ref_len, u.edits as f64 / u.ref_len as f64)
                .expect("string write");
        }
        s
    }
}

/// Scores every reference; references without a hypothesis count as an
/// empty hypothesis. Hypotheses for unknown ids are an error.
pub fn score(hyps: &[Hypothesis], refs: &[(String, String)]) -> Result<CerReport> {
    if refs.is_empty() {
        return Err(Error::InvalidArgument("no references to score against".into()));
    }
    let by_id: BTreeMap<&str, &str> = hyps.iter().map(|h| (h.id.as_str(), h.text.as_str())).collect();
    for h in hyps {
        if !refs.iter().any(|(id, _)| *id == h.id) {
            return Err(Error::InvalidArgument(format!("no reference for hypothesis {:?}", h.id)));
        }
    }
    let mut utterances = Vec::with_capacity(refs.len());
    for (id, text) in refs {
        let r: Vec<char> = text.chars().collect();
        if r.is_empty() {
            return Err(Error::InvalidArgument(format!("empty reference for {id:?}")));
        }
        let h: Vec<char> = by_id.get(id.as_str()).copied().unwrap_or("").chars().collect();
        utterances.push(UtteranceScore {
            id: id.clone(),
            edits: edit_distance(&h, &r),
            ref_len: r.len(),
        });
    }
    Ok(CerReport {
        edits: utterances.iter().map(|u| u.edits).sum(),
        ref_len: utterances.iter().map(|u| u.ref_len).sum(),
        utterances,
    })
}

/// CER percentages laid out with one row per model and one column per split.
pub fn render_cer_table(rows: &[(String, String, f64)]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut splits: Vec<&str> = Vec::new();
    for (m, s, _) in rows {
        if !models.contains(&m.as_str()) {
            models.push(m);
        }
        if !splits.contains(&s.as_str()) {
            splits.push(s);
        }
    }
    let width = models.iter().map(|m| m.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}", "model");
    for s in &splits {
        write!(out, "  {s:>8}").expect("string write");
    }
    out.push('\n');
    for m in &models {
        write!(out, "{m:<width$}").expect("string write");
        for s in &splits {
            match rows.iter().find(|(rm, rs, _)| rm == m && rs == s) {
                Some((_, _, c)) => write!(out, "  {:>8.2}", 100.0 * c),
                None => write!(out, "  {:>8}", "-"),
            }
            .expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Parses a channel configuration such as `2_1` (1-based) into 0-based indices.
pub fn parse_channel_spec(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("channel spec {s:?}: expected 1-based indices joined by `_`"));
    let out = s
        .split('_')
        .map(|p| p.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1).ok_or_else(bad))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = out.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != out.len() {
        return Err(bad());
    }
    Ok(out)
}

/// Teacher-forced label accuracy over `examples` with channels reordered or
/// subset by `order`. Only mask-based MVDR models accept arbitrary orders.
pub fn channel_accuracy(model: &Model, store: &ParameterStore, examples: &[Example], order: &[usize]) -> Result<f64> {
    if model.kind() != BeamformerKind::MaskMvdr {
        return Err(Error::Unsupported(format!(
            "channel configurations need a mask_mvdr model, this one is {}",
            model.kind().name()
        )));
    }
    let (mut correct, mut steps) = (0, 0);
    for ex in examples {
        let x = ex.stft.select(order)?;
        let (c, s, _) = model.evaluate(store, &x, &ex.text)?;
        correct += c;
        steps += s;
    }
    Ok(correct as f64 / steps as f64)
}

/// SNRs of an oracle-mask MVDR pass.
#[derive(Clone, Debug)]
pub struct OracleEnhancement {
    pub output: ComplexTensor,
    /// Input SNR in dB per channel.
    pub input_snr: Vec<f64>,
    pub output_snr: f64,
}

impl OracleEnhancement {
    /// Output SNR minus the best input channel's SNR.
    pub fn gain_db(&self) -> f64 {
        self.output_snr - self.input_snr.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn stft_energy(x: &ComplexTensor) -> f64 {
    power_spectrum(x).sum()
}

/// MVDR with ideal ratio masks from the known components and a one-hot
/// reference on `reference`. SNRs are measured in the STFT domain by
/// applying the same filter to the speech and noise images separately.
pub fn oracle_enhance(utt: &Utterance, params: &StftParams, reference: usize, loading: DiagLoading) -> Result<OracleEnhancement> {
    let x = stft(&utt.noisy, params)?;
    let s = stft(&utt.speech, params)?;
    let n = stft(&utt.noise, params)?;
    let c = x.channels();
    if reference >= c {
        return Err(Error::ChannelMismatch { expected: c, got: reference + 1 });
    }
    let (ms, mn) = oracle_masks(utt, params, reference)?;
    let u = Tensor::from_fn(&[c], |i| if i == reference { 1.0 } else { 0.0 });
    let run = |input: &ComplexTensor| -> Result<ComplexTensor> {
        let mut g = Graph::new();
        let xv = g.complex_leaf(&x.coeffs);
        let msv = g.constant(ms.clone());
        let mnv = g.constant(mn.clone());
        let uv = g.constant(u.clone());
        let ps = estimate_psd(&mut g, xv, msv)?;
        let pn = estimate_psd(&mut g, xv, mnv)?;
        let w = mvdr_filter(&mut g, ps, pn, uv, loading)?;
        let iv = g.complex_leaf(input);
        let out = filter_and_sum(&mut g, iv, BeamformingFilter::TimeInvariant(w))?;
        Ok(g.complex_value(out))
    };
    let output = run(&x.coeffs)?;
    let es = stft_energy(&run(&s.coeffs)?);
    let en = stft_energy(&run(&n.coeffs)?);
    let input_snr = (0..c)
        .map(|ch| 10.0 * (stft_energy(&s.channel(ch)) / stft_energy(&n.channel(ch))).log10())
        .collect();
    Ok(OracleEnhancement {
        output,
        input_snr,
        output_snr: 10.0 * (es / en).log10(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_utterance, NoiseKind, SceneSpec};

    fn refs() -> Vec<(String, String)> {
        vec![("a".into(), "abc".into()), ("b".into(), "de".into())]
    }

    #[test]
    fn identical_hypotheses_score_zero_and_empty_scores_one() {
        let hyps: Vec<Hypothesis> = refs()
            .into_iter()
            .map(|(id, text)| Hypothesis { id, score: -1.5, text })
            .collect();
        let parsed = parse_hypotheses(&render_hypotheses(&hyps)).unwrap();
        assert_eq!(parsed, hyps);
        assert_eq!(score(&parsed, &refs()).unwrap().cer(), 0.0);
        assert_eq!(score(&[], &refs()).unwrap().cer(), 1.0);
        let stray = Hypothesis { id: "z".into(), score: 0.0, text: "x".into() };
        assert!(score(&[stray], &refs()).is_err());
    }

    #[test]
    fn channel_specs() {
        assert_eq!(parse_channel_spec("2_1").unwrap(), vec![1, 0]);
        assert_eq!(parse_channel_spec("3").unwrap(), vec![2]);
        assert!(parse_channel_spec("0_1").is_err());
        assert!(parse_channel_spec("1_1").is_err());
        assert!(parse_channel_spec("a").is_err());
    }

    #[test]
    fn table_layout() {
        let t = render_cer_table(&[
            ("noisy".into(), "dev".into(), 0.25),
            ("mask_mvdr".into(), "dev".into(), 0.153),
            ("noisy".into(), "eval".into(), 0.5),
        ]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("model") && lines[0].contains("dev") && lines[0].contains("eval"));
        assert!(lines[1].contains("25.00") && lines[1].contains("50.00"));
        assert!(lines[2].contains("15.30") && lines[2].trim_end().ends_with('-'));
    }

    #[test]
    fn oracle_masks_beat_the_best_channel_on_a_point_source() {
        let spec = SceneSpec::random(4, 2, 8000, NoiseKind::PointSource, 0.0).unwrap();
        let chars: Vec<char> = "abcdefgh".chars().collect();
        let utt = synth_utterance("u", &spec, "abcdef", &chars).unwrap();
        let r = oracle_enhance(&utt, &StftParams::tiny(), 0, DiagLoading::default()).unwrap();
        assert!(r.gain_db() > 3.0, "{r:?}");
    }
}
