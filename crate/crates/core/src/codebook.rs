//! Codebooks of waveform/beamforming codewords: random and nested
//! generators, Lloyd-style training on a channel ensemble, and a versioned
//! text format.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{parse_entry, parse_field, ChannelRealization};
use crate::error::{Error, Result};
use crate::rectenna::DiodeMomentModel;
use crate::rng::complex_gaussian;
use crate::signal::{effective_tones_raw, self_convolution, ToneGrid, WaveformWeights};
use crate::strategies::{smf_weights, up_weights, SmfParams, DEFAULT_BETA};

pub const FORMAT_TAG: &str = "wptcb";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    entries: Vec<WaveformWeights>,
    nested: bool,
    provenance: String,
}

impl Codebook {
    /// Requires K ≥ 1, identical dimensions and budgets, and every entry on
    /// the power sphere.
    pub fn new(entries: Vec<WaveformWeights>, nested: bool, provenance: impl Into<String>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Domain("codebook needs at least one codeword".into()))?;
        let (m, n, p) = (first.m_antennas(), first.n_tones(), first.power_budget());
        for (k, e) in entries.iter().enumerate() {
            if e.m_antennas() != m || e.n_tones() != n || e.power_budget() != p {
                return Err(Error::Dimension(format!("codeword {} differs in shape or budget", k + 1)));
            }
            if !e.is_on_power_sphere() {
                return Err(Error::Domain(format!(
                    "codeword {} has power {} instead of {p}",
                    k + 1,
                    e.transmit_power()
                )));
            }
        }
        let provenance = provenance.into();
        if provenance.contains('\n') {
            return Err(Error::Domain("provenance must be a single line".into()));
        }
        Ok(Self {
            entries,
            nested,
            provenance,
        })
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[WaveformWeights] {
        &self.entries
    }

    /// Codeword by 1-based index.
    pub fn codeword(&self, index: usize) -> Option<&WaveformWeights> {
        index.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn m_antennas(&self) -> usize {
        self.entries[0].m_antennas()
    }

    pub fn n_tones(&self) -> usize {
        self.entries[0].n_tones()
    }

    pub fn power_budget(&self) -> f64 {
        self.entries[0].power_budget()
    }

    pub fn nested(&self) -> bool {
        self.nested
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// The first `k` codewords.
    pub fn prefix(&self, k: usize) -> Result<Codebook> {
        if k == 0 || k > self.k() {
            return Err(Error::Domain(format!("prefix of size {k} from a {}-codebook", self.k())));
        }
        Ok(Codebook {
            entries: self.entries[..k].to_vec(),
            nested: self.nested,
            provenance: self.provenance.clone(),
        })
    }

    /// Header `wptcb v1 M N K P nested`, a `# provenance: ...` line, then K
    /// blocks of M×N lines `m n real imag` (1-based, antenna-major).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{FORMAT_TAG} {FORMAT_VERSION} {} {} {} {:e} {}",
            self.m_antennas(),
            self.n_tones(),
            self.k(),
            self.power_budget(),
            u8::from(self.nested)
        );
        let _ = writeln!(out, "# provenance: {}", self.provenance);
        for e in &self.entries {
            for m in 0..e.m_antennas() {
                for n in 0..e.n_tones() {
                    let s = e.get(m, n);
                    let _ = writeln!(out, "{} {} {:e} {:e}", m + 1, n + 1, s.re, s.im);
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.first().ok_or_else(|| Error::parse(1, "empty codebook file"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.first() != Some(&FORMAT_TAG) {
            return Err(Error::parse(1, format!("not a codebook file (expected '{FORMAT_TAG}' header)")));
        }
        if f.get(1) != Some(&FORMAT_VERSION) {
            return Err(Error::parse(
                1,
                format!("unsupported version '{}', expected {FORMAT_VERSION}", f.get(1).unwrap_or(&"")),
            ));
        }
        if f.len() != 7 {
            return Err(Error::parse(1, "expected 'wptcb v1 M N K P nested'"));
        }
        let m: usize = parse_field(1, f[2], "M")?;
        let n: usize = parse_field(1, f[3], "N")?;
        let k: usize = parse_field(1, f[4], "K")?;
        let p: f64 = parse_field(1, f[5], "P")?;
        let nested = match f[6] {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(1, format!("nested flag must be 0 or 1, got '{other}'"))),
        };
        if m == 0 || n == 0 || k == 0 {
            return Err(Error::parse(1, "M, N and K must be positive"));
        }

        let mut idx = 1;
        let mut provenance = String::new();
        if let Some(rest) = lines.get(1).and_then(|l| l.strip_prefix("# provenance:")) {
            provenance = rest.strip_prefix(' ').unwrap_or(rest).to_string();
            idx = 2;
        }

        let mut entries = Vec::with_capacity(k);
        for cw in 0..k {
            let block_start = idx + 1;
            let mut weights = Vec::with_capacity(m * n);
            for mi in 0..m {
                for ni in 0..n {
                    let line_no = idx + 1;
                    let line = lines
                        .get(idx)
                        .ok_or_else(|| Error::parse(line_no, format!("unexpected end of file in codeword {}", cw + 1)))?;
                    weights.push(parse_entry(line_no, line, mi, ni)?);
                    idx += 1;
                }
            }
            let w = WaveformWeights::new(m, n, weights, p)
                .map_err(|e| Error::parse(block_start, format!("codeword {}: {e}", cw + 1)))?;
            entries.push(w);
        }
        if let Some(off) = lines[idx..].iter().position(|l| !l.trim().is_empty()) {
            return Err(Error::parse(idx + off + 1, "trailing content after last codeword"));
        }
        Codebook::new(entries, nested, provenance).map_err(|e| Error::parse(1, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn random_codeword<R: Rng + ?Sized>(m: usize, n: usize, power: f64, rng: &mut R) -> Result<WaveformWeights> {
    let raw = (0..m * n).map(|_| complex_gaussian(rng, 1.0)).collect();
    WaveformWeights::on_power_sphere(m, n, raw, power)
}

/// K i.i.d. complex Gaussian codewords, each rescaled to the power sphere.
pub fn gen_random<R: Rng + ?Sized>(m: usize, grid: &ToneGrid, power: f64, k: usize, rng: &mut R) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::Domain("codebook needs at least one codeword".into()));
    }
    let entries = (0..k)
        .map(|_| random_codeword(m, grid.n_tones(), power, rng))
        .collect::<Result<_>>()?;
    Codebook::new(entries, false, format!("gen_random m={m} n={} k={k}", grid.n_tones()))
}

/// A K_max codebook whose power-of-two prefixes are the smaller books.
/// Entry 1 is the uniform-power codeword, the rest are random.
pub fn gen_nested<R: Rng + ?Sized>(m: usize, grid: &ToneGrid, power: f64, k_max: usize, rng: &mut R) -> Result<Codebook> {
    if !k_max.is_power_of_two() {
        return Err(Error::Domain(format!("nested codebook size must be a power of two, got {k_max}")));
    }
    let mut entries = vec![up_weights(m, grid, power)?];
    for _ in 1..k_max {
        entries.push(random_codeword(m, grid.n_tones(), power, rng)?);
    }
    Codebook::new(entries, true, format!("gen_nested m={m} n={} k={k_max}", grid.n_tones()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LloydOptions {
    /// Maximum number of assign/update rounds.
    pub iters: usize,
    /// Projected-gradient steps per codeword in each update.
    pub ascent_steps: usize,
    /// SMF exponent used when seeding codewords.
    pub beta: f64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            iters: 30,
            ascent_steps: 8,
            beta: DEFAULT_BETA,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    /// Average best-codeword dc power over the training set, once before
    /// the first update and once after each update.
    pub objective: Vec<f64>,
    pub rounds: usize,
    /// Stopped because the assignment did not change.
    pub converged: bool,
}

/// Evaluates the moment-model dc power and its gradient over a fixed set
/// of channels that share M and N.
struct Objective<'a> {
    channels: &'a [ChannelRealization],
    model: &'a DiodeMomentModel,
    m: usize,
    n: usize,
}

impl Objective<'_> {
    fn dc(&self, channel: usize, s: &[Complex64]) -> f64 {
        let tones = effective_tones_raw(self.channels[channel].gains(), s, self.m, self.n);
        crate::rectenna::dc_power_moment(self.model, &tones)
    }

    /// Sum of dc power over `members`, accumulated in the given order.
    fn cluster_sum(&self, members: &[usize], s: &[Complex64]) -> f64 {
        members.iter().map(|&c| self.dc(c, s)).sum()
    }

    /// ∂/∂s* of the dc power summed over `members`.
    fn gradient(&self, members: &[usize], s: &[Complex64]) -> Vec<Complex64> {
        let (m_ant, n) = (self.m, self.n);
        let DiodeMomentModel { k2, k4, alpha } = *self.model;
        let mut grad = vec![Complex64::new(0.0, 0.0); m_ant * n];
        for &c in members {
            let gains = self.channels[c].gains();
            let a = effective_tones_raw(gains, s, m_ant, n).amplitudes().to_vec();
            let b = self_convolution(&a);
            let m2 = 0.5 * a.iter().map(|x| x.norm_sqr()).sum::<f64>();
            let m4 = 0.375 * b.iter().map(|x| x.norm_sqr()).sum::<f64>();
            let z = k2 * m2 + k4 * m4;
            for t in 0..n {
                // ∂m2/∂a*_t = a_t/2 and ∂m4/∂a*_t = (3/4)·Σ_j b_{t+j}·a*_j.
                let corr: Complex64 = (0..n).map(|j| b[t + j] * a[j].conj()).sum();
                let d = (a[t] * (0.5 * k2) + corr * (0.75 * k4)) * (2.0 * alpha * z);
                for mi in 0..m_ant {
                    grad[mi * n + t] += d * gains[mi * n + t].conj();
                }
            }
        }
        grad
    }
}

fn project(v: &mut [Complex64], radius: f64) -> bool {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return false;
    }
    let scale = radius / norm;
    v.iter_mut().for_each(|x| *x *= scale);
    true
}

/// Projected gradient ascent on the cluster sum, starting at `s`. Each
/// step backtracks until the objective does not decrease; a step that
/// cannot be made ends the ascent.
fn ascend(obj: &Objective<'_>, members: &[usize], s: &[Complex64], radius: f64, steps: usize) -> Vec<Complex64> {
    let mut current = s.to_vec();
    let mut value = obj.cluster_sum(members, &current);
    let mut rate = 0.25;
    for _ in 0..steps {
        let g = obj.gradient(members, &current);
        let g_norm = g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if !(g_norm > 0.0 && g_norm.is_finite()) {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let step = rate * radius / g_norm;
            let mut cand: Vec<Complex64> = current.iter().zip(&g).map(|(x, d)| x + d * step).collect();
            if project(&mut cand, radius) {
                let v = obj.cluster_sum(members, &cand);
                if v >= value {
                    current = cand;
                    value = v;
                    accepted = true;
                    break;
                }
            }
            rate *= 0.5;
        }
        if !accepted {
            break;
        }
        rate = (rate * 2.0).min(1.0);
    }
    current
}

fn check_training_set(training: &[ChannelRealization]) -> Result<(usize, usize)> {
    let first = training
        .first()
        .ok_or_else(|| Error::Domain("empty training set".into()))?;
    let (m, n) = (first.m_antennas(), first.n_tones());
    if training.iter().any(|c| c.m_antennas() != m || c.n_tones() != n) {
        return Err(Error::Dimension("training channels differ in M or N".into()));
    }
    Ok((m, n))
}

/// FNV-1a, used to fingerprint the training configuration in provenance.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

struct Trainer<'a> {
    obj: Objective<'a>,
    opts: LloydOptions,
    power: f64,
    /// SMF dc power on each training channel, the reference for
    /// judging how well a channel is served.
    smf_dc: Vec<f64>,
    smf: Vec<Vec<Complex64>>,
}

impl<'a> Trainer<'a> {
    fn new(
        training: &'a [ChannelRealization],
        model: &'a DiodeMomentModel,
        opts: LloydOptions,
        power: f64,
    ) -> Result<Self> {
        let (m, n) = check_training_set(training)?;
        if opts.iters == 0 {
            return Err(Error::Domain("need at least one training iteration".into()));
        }
        let params = SmfParams::new(opts.beta, power)?;
        let obj = Objective {
            channels: training,
            model,
            m,
            n,
        };
        let smf: Vec<Vec<Complex64>> = training
            .par_iter()
            .map(|c| smf_weights(c, &params).map(|w| w.as_slice().to_vec()))
            .collect::<Result<_>>()?;
        let smf_dc = smf.iter().enumerate().map(|(c, s)| obj.dc(c, s)).collect();
        Ok(Self {
            obj,
            opts,
            power,
            smf_dc,
            smf,
        })
    }

    fn radius(&self) -> f64 {
        (2.0 * self.power).sqrt()
    }

    /// Best codeword (0-based, lowest index on ties) and its dc power for
    /// every channel.
    fn assign(&self, book: &[Vec<Complex64>]) -> Vec<(usize, f64)> {
        (0..self.obj.channels.len())
            .into_par_iter()
            .map(|c| {
                let mut best = (0, self.obj.dc(c, &book[0]));
                for (k, s) in book.iter().enumerate().skip(1) {
                    let v = self.obj.dc(c, s);
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                best
            })
            .collect()
    }

    /// Channels ordered from worst to best served, by the ratio of their
    /// current dc power to their SMF dc power (ties by index).
    fn worst_served(&self, served: &[f64]) -> Vec<usize> {
        let ratio = |c: usize| if self.smf_dc[c] > 0.0 { served[c] / self.smf_dc[c] } else { f64::INFINITY };
        let mut order: Vec<usize> = (0..served.len()).collect();
        order.sort_by(|&x, &y| ratio(x).total_cmp(&ratio(y)).then(x.cmp(&y)));
        order
    }

    /// Appends SMF seeds until the book has `k` entries. The first seed of
    /// an empty book is a random channel, later seeds are the worst-served
    /// channels given the entries so far.
    fn seed<R: Rng + ?Sized>(&self, book: &mut Vec<Vec<Complex64>>, k: usize, rng: &mut R) {
        let n_train = self.obj.channels.len();
        let mut used = vec![false; n_train];
        if book.is_empty() {
            let c = rng.random_range(0..n_train);
            used[c] = true;
            book.push(self.smf[c].clone());
        }
        while book.len() < k {
            let served: Vec<f64> = self.assign(book).into_iter().map(|(_, v)| v).collect();
            let c = self
                .worst_served(&served)
                .into_iter()
                .find(|&c| !used[c])
                .expect("training set larger than codebook");
            used[c] = true;
            book.push(self.smf[c].clone());
        }
    }

    /// Alternating maximization; entries before `frozen` are never changed.
    fn run(&self, book: &mut [Vec<Complex64>], frozen: usize) -> TrainingReport {
        let n_train = self.obj.channels.len() as f64;
        let mut report = TrainingReport::default();
        let mut previous: Option<Vec<usize>> = None;
        let mut assignment = self.assign(book);
        report.objective.push(assignment.iter().map(|&(_, v)| v).sum::<f64>() / n_train);

        for _ in 0..self.opts.iters {
            let labels: Vec<usize> = assignment.iter().map(|&(k, _)| k).collect();
            if previous.as_ref() == Some(&labels) {
                report.converged = true;
                break;
            }
            let mut members = vec![Vec::new(); book.len()];
            for (c, &k) in labels.iter().enumerate() {
                members[k].push(c);
            }

            let updated: Vec<Option<Vec<Complex64>>> = (frozen..book.len())
                .into_par_iter()
                .map(|k| {
                    (!members[k].is_empty())
                        .then(|| ascend(&self.obj, &members[k], &book[k], self.radius(), self.opts.ascent_steps))
                })
                .collect();
            for (k, s) in (frozen..book.len()).zip(updated) {
                if let Some(s) = s {
                    book[k] = s;
                }
            }

            let empty: Vec<usize> = (frozen..book.len()).filter(|&k| members[k].is_empty()).collect();
            if !empty.is_empty() {
                let served: Vec<f64> = self.assign(book).into_iter().map(|(_, v)| v).collect();
                for (k, c) in empty.into_iter().zip(self.worst_served(&served)) {
                    book[k] = self.smf[c].clone();
                }
            }

            previous = Some(labels);
            assignment = self.assign(book);
            report.objective.push(assignment.iter().map(|&(_, v)| v).sum::<f64>() / n_train);
            report.rounds += 1;
        }
        report
    }

    fn finish(&self, book: Vec<Vec<Complex64>>, nested: bool, provenance: String) -> Result<Codebook> {
        let entries = book
            .into_iter()
            .map(|s| {
                let exact = WaveformWeights::new(self.obj.m, self.obj.n, s.clone(), self.power)
                    .ok()
                    .filter(WaveformWeights::is_on_power_sphere);
                exact.map_or_else(|| WaveformWeights::on_power_sphere(self.obj.m, self.obj.n, s, self.power), Ok)
            })
            .collect::<Result<_>>()?;
        Codebook::new(entries, nested, provenance)
    }
}

fn provenance(kind: &str, training: &[ChannelRealization], k: usize, model: &DiodeMomentModel, opts: &LloydOptions) -> String {
    let config = format!(
        "k={k} n_train={} iters={} ascent={} beta={} k2={} k4={} alpha={}",
        training.len(),
        opts.iters,
        opts.ascent_steps,
        opts.beta,
        model.k2,
        model.k4,
        model.alpha
    );
    format!("{kind} {config} config_hash={:016x}", fnv1a(&config))
}

/// Lloyd-style training of a K-codebook on the moment model.
pub fn train_lloyd<R: Rng + ?Sized>(
    training: &[ChannelRealization],
    k: usize,
    model: &DiodeMomentModel,
    power: f64,
    opts: LloydOptions,
    rng: &mut R,
) -> Result<(Codebook, TrainingReport)> {
    if k == 0 || training.len() < k {
        return Err(Error::Domain(format!(
            "training set of {} channels cannot train {k} codewords",
            training.len()
        )));
    }
    let trainer = Trainer::new(training, model, opts, power)?;
    let mut book = Vec::with_capacity(k);
    trainer.seed(&mut book, k, rng);
    let report = trainer.run(&mut book, 0);
    let codebook = trainer.finish(book, false, provenance("train_lloyd", training, k, model, &opts))?;
    Ok((codebook, report))
}

/// Continues training from `initial`, keeping its first `frozen` entries fixed.
pub fn train_lloyd_from(
    training: &[ChannelRealization],
    initial: &Codebook,
    frozen: usize,
    model: &DiodeMomentModel,
    opts: LloydOptions,
) -> Result<(Codebook, TrainingReport)> {
    if training.len() < initial.k() {
        return Err(Error::Domain("training set smaller than the codebook".into()));
    }
    let trainer = Trainer::new(training, model, opts, initial.power_budget())?;
    if training[0].m_antennas() != initial.m_antennas() || training[0].n_tones() != initial.n_tones() {
        return Err(Error::Dimension("codebook and training channels disagree on M or N".into()));
    }
    let mut book: Vec<Vec<Complex64>> = initial.entries().iter().map(|e| e.as_slice().to_vec()).collect();
    let frozen = frozen.min(book.len());
    let report = trainer.run(&mut book, frozen);
    let codebook = trainer.finish(
        book,
        initial.nested(),
        provenance("train_lloyd_from", training, initial.k(), model, &opts),
    )?;
    Ok((codebook, report))
}

/// Trained nested family: entry 1 is the uniform-power codeword, and each
/// doubling K → 2K trains only the new half with the first K entries
/// frozen, so every power-of-two prefix is itself a trained codebook.
pub fn train_nested<R: Rng + ?Sized>(
    training: &[ChannelRealization],
    k_max: usize,
    model: &DiodeMomentModel,
    power: f64,
    opts: LloydOptions,
    rng: &mut R,
) -> Result<(Codebook, Vec<TrainingReport>)> {
    if !k_max.is_power_of_two() {
        return Err(Error::Domain(format!("nested codebook size must be a power of two, got {k_max}")));
    }
    if training.len() < k_max {
        return Err(Error::Domain(format!(
            "training set of {} channels cannot train {k_max} codewords",
            training.len()
        )));
    }
    let trainer = Trainer::new(training, model, opts, power)?;
    let grid = training[0].grid();
    let mut book = vec![up_weights(training[0].m_antennas(), grid, power)?.as_slice().to_vec()];
    let mut reports = Vec::new();
    let mut k = 1;
    while k < k_max {
        let frozen = k;
        k *= 2;
        trainer.seed(&mut book, k, rng);
        reports.push(trainer.run(&mut book, frozen));
    }
    let codebook = trainer.finish(book, true, provenance("train_nested", training, k_max, model, &opts))?;
    Ok((codebook, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{frequency_response, sample_taps, ChannelModelParams};
    use crate::rng::{stream, Purpose, StreamId};
    use crate::signal::effective_tones;

    fn grid(n: usize) -> ToneGrid {
        ToneGrid::new(n, 2.4e9, 10e6).unwrap()
    }

    fn channels(m: usize, n: usize, count: usize, seed: u64) -> Vec<ChannelRealization> {
        let params = ChannelModelParams {
            pathloss_db: 0.0,
            ..Default::default()
        };
        let g = grid(n);
        let mut rng = stream(seed, StreamId::new(Purpose::Taps, 0, 0));
        (0..count)
            .map(|_| frequency_response(&sample_taps(&params, m, &mut rng), &params, &g))
            .collect()
    }

    fn rng(seed: u64) -> crate::rng::SimRng {
        stream(seed, StreamId::new(Purpose::Codebook, 0, 0))
    }

    fn dc(model: &DiodeMomentModel, ch: &ChannelRealization, w: &WaveformWeights) -> f64 {
        crate::rectenna::dc_power_moment(model, &effective_tones(ch, w).unwrap())
    }

    #[test]
    fn random_codebook_shape_and_power() {
        let g = grid(8);
        let cb = gen_random(4, &g, 2.0, 64, &mut rng(1)).unwrap();
        assert_eq!(cb.k(), 64);
        assert!(cb.entries().iter().all(|e| e.as_slice().len() == 32 && e.is_on_power_sphere()));
        assert_eq!(cb, gen_random(4, &g, 2.0, 64, &mut rng(1)).unwrap());
        let one = gen_random(1, &g, 0.5, 1, &mut rng(2)).unwrap();
        assert_eq!(one.k(), 1);
        assert!(one.entries()[0].is_on_power_sphere());
        assert!(gen_random(1, &g, 0.5, 0, &mut rng(2)).is_err());
    }

    #[test]
    fn nested_codebook_structure() {
        let g = grid(4);
        let cb = gen_nested(2, &g, 1.0, 64, &mut rng(3)).unwrap();
        assert!(cb.nested());
        assert_eq!(cb.entries()[0], up_weights(2, &g, 1.0).unwrap());
        assert_eq!(cb.prefix(4).unwrap().entries(), &cb.entries()[..4]);
        assert!(matches!(gen_nested(2, &g, 1.0, 48, &mut rng(3)), Err(Error::Domain(_))));
    }

    #[test]
    fn nested_best_of_k_non_decreasing() {
        let model = DiodeMomentModel::default();
        let cb = gen_nested(2, &grid(4), 1.0, 64, &mut rng(4)).unwrap();
        for ch in channels(2, 4, 20, 5) {
            let mut last = f64::NEG_INFINITY;
            for k in [1, 2, 4, 8, 16, 32, 64] {
                let best = cb.entries()[..k].iter().map(|w| dc(&model, &ch, w)).fold(f64::NEG_INFINITY, f64::max);
                assert!(best >= last);
                last = best;
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = DiodeMomentModel::new(0.17, 19.1, 1.0).unwrap();
        let chans = channels(2, 3, 3, 6);
        let obj = Objective {
            channels: &chans,
            model: &model,
            m: 2,
            n: 3,
        };
        let members = [0, 1, 2];
        let s = gen_random(2, &grid(3), 1.0, 1, &mut rng(7)).unwrap().entries()[0].as_slice().to_vec();
        let g = obj.gradient(&members, &s);
        let eps = 1e-6;
        for i in 0..s.len() {
            for (dir, part) in [(Complex64::new(1.0, 0.0), 0), (Complex64::new(0.0, 1.0), 1)] {
                let mut plus = s.clone();
                let mut minus = s.clone();
                plus[i] += dir * eps;
                minus[i] -= dir * eps;
                let fd = (obj.cluster_sum(&members, &plus) - obj.cluster_sum(&members, &minus)) / (2.0 * eps);
                // ∂f/∂x = 2·Re(∂f/∂s*), ∂f/∂y = 2·Im(∂f/∂s*).
                let analytic = if part == 0 { 2.0 * g[i].re } else { 2.0 * g[i].im };
                let scale = fd.abs().max(1e-8);
                assert!((fd - analytic).abs() / scale < 1e-5, "entry {i}: fd={fd} analytic={analytic}");
            }
        }
    }

    #[test]
    fn single_codeword_beats_smf_on_identical_channels() {
        let model = DiodeMomentModel::new(0.17, 19.1, 1.0).unwrap();
        let h = channels(2, 4, 1, 8).remove(0);
        let training = vec![h.clone(); 10];
        let (cb, _) = train_lloyd(&training, 1, &model, 1.0, LloydOptions::default(), &mut rng(9)).unwrap();
        let smf = smf_weights(&h, &SmfParams::new(3.0, 1.0).unwrap()).unwrap();
        assert!(dc(&model, &h, &cb.entries()[0]) >= dc(&model, &h, &smf) - 1e-9);
    }

    #[test]
    fn assignment_picks_strict_winner() {
        let model = DiodeMomentModel::default();
        let g = grid(1);
        let h = ChannelRealization::new(2, g.clone(), vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)], "h").unwrap();
        let p = 1.0;
        let bad = WaveformWeights::on_power_sphere(2, 1, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)], p).unwrap();
        let good = smf_weights(&h, &SmfParams::new(3.0, p).unwrap()).unwrap();
        let training = vec![h];
        let trainer = Trainer::new(&training, &model, LloydOptions::default(), p).unwrap();
        let book = vec![bad.as_slice().to_vec(), good.as_slice().to_vec()];
        assert_eq!(trainer.assign(&book)[0].0, 1);
    }

    #[test]
    fn objective_is_non_decreasing() {
        let model = DiodeMomentModel::default();
        let training = channels(2, 4, 60, 10);
        let opts = LloydOptions {
            iters: 20,
            ..Default::default()
        };
        let (cb, report) = train_lloyd(&training, 4, &model, 1.0, opts, &mut rng(11)).unwrap();
        assert!(report.objective.len() >= 2);
        for w in report.objective.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-12), "{:?}", report.objective);
        }
        assert!(cb.entries().iter().all(WaveformWeights::is_on_power_sphere));
    }

    #[test]
    fn training_is_deterministic_and_validates() {
        let model = DiodeMomentModel::default();
        let training = channels(2, 2, 20, 12);
        let opts = LloydOptions {
            iters: 5,
            ..Default::default()
        };
        let a = train_lloyd(&training, 4, &model, 1.0, opts, &mut rng(13)).unwrap();
        let b = train_lloyd(&training, 4, &model, 1.0, opts, &mut rng(13)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(train_lloyd(&training[..3], 4, &model, 1.0, opts, &mut rng(13)), Err(Error::Domain(_))));
    }

    #[test]
    fn trained_nested_family_keeps_prefixes() {
        let model = DiodeMomentModel::default();
        let training = channels(2, 2, 40, 14);
        let opts = LloydOptions {
            iters: 4,
            ..Default::default()
        };
        let (cb, reports) = train_nested(&training, 8, &model, 1.0, opts, &mut rng(15)).unwrap();
        assert_eq!(cb.k(), 8);
        assert!(cb.nested());
        assert_eq!(reports.len(), 3);
        assert_eq!(cb.entries()[0], up_weights(2, &grid(2), 1.0).unwrap());
        assert!(cb.entries().iter().all(WaveformWeights::is_on_power_sphere));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let cb = gen_nested(3, &grid(2), 0.7, 8, &mut rng(16)).unwrap();
        let back = Codebook::from_text(&cb.to_text()).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.provenance(), cb.provenance());
        for (x, y) in back.entries().iter().zip(cb.entries()) {
            for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let text = gen_random(2, &grid(2), 1.0, 3, &mut rng(17)).unwrap().to_text();
        let truncated: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Codebook::from_text(&truncated), Err(Error::Parse { line: 8, .. })));
        let wrong_version = text.replacen("wptcb v1", "wptcb v2", 1);
        assert!(matches!(Codebook::from_text(&wrong_version), Err(Error::Parse { line: 1, .. })));
        let bad_number = text.replacen("1 1 ", "1 1 x", 1);
        assert!(matches!(Codebook::from_text(&bad_number), Err(Error::Parse { line: 3, .. })));
        assert!(Codebook::from_text("").is_err());
    }
}
