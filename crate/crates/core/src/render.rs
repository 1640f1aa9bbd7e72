//! Beep timelines to PCM, PCM to WAV, and a zero-crossing frequency meter.
//!
//! The beep generator produces a square wave of `12000 / divider` Hz; a divider
//! of 0 is silence. At 48 kHz that is a period of exactly `4 * divider`
//! samples, so rendering is integer-exact.

use thiserror::Error;

use crate::codec::BeepTimeline;
use crate::Millis;

pub const SAMPLE_RATE: u32 = 48_000;
const SAMPLES_PER_MS: u64 = 48;
/// Tone frequency numerator: `f = BEEP_BASE_HZ / divider`.
pub const BEEP_BASE_HZ: u32 = 12_000;
pub const WAV_HEADER_LEN: usize = 44;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("end time {end} ms is before the last timeline entry at {last} ms")]
    EndBeforeLastEntry { end: Millis, last: Millis },
    #[error("amplitude must be in (0, 1]")]
    Amplitude,
    #[error("window must be positive")]
    EmptyWindow,
    #[error("window of {window} samples exceeds buffer of {len}")]
    WindowTooLong { window: usize, len: usize },
}

/// Frequency of the tone a divider produces, or `None` for silence.
pub fn divider_frequency(divider: u8) -> Option<f64> {
    (divider != 0).then(|| f64::from(BEEP_BASE_HZ) / f64::from(divider))
}

/// Number of samples covering `ms`, rounded half up.
pub fn samples_for(ms: Millis) -> usize {
    let exact = ms * Millis::from_integer(SAMPLES_PER_MS);
    (exact + Millis::new(1, 2)).floor().to_integer() as usize
}

/// 48 kHz, 16-bit, mono.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PcmBuffer {
    pub samples: Vec<i16>,
}

impl PcmBuffer {
    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> Millis {
        Millis::new(self.samples.len() as u64, SAMPLES_PER_MS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    amplitude: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { amplitude: 0.5 }
    }
}

impl RenderConfig {
    pub fn new(amplitude: f64) -> Result<Self, RenderError> {
        if !(amplitude > 0.0 && amplitude <= 1.0) {
            return Err(RenderError::Amplitude);
        }
        Ok(RenderConfig { amplitude })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn level(&self) -> i16 {
        (self.amplitude * f64::from(i16::MAX)).round() as i16
    }
}

/// Renders `[0, end_ms)` of a timeline. Each entry restarts the wave at the
/// top of its period.
pub fn timeline_to_pcm(
    timeline: &BeepTimeline,
    end_ms: Millis,
    config: &RenderConfig,
) -> Result<PcmBuffer, RenderError> {
    if let Some(last) = timeline.last_time() {
        if end_ms < last {
            return Err(RenderError::EndBeforeLastEntry { end: end_ms, last });
        }
    }
    let total = samples_for(end_ms);
    let level = config.level();
    let mut samples = vec![0i16; total];

    let entries = timeline.entries();
    for (i, &(start, divider)) in entries.iter().enumerate() {
        if divider == 0 {
            continue;
        }
        let from = samples_for(start).min(total);
        let to = entries
            .get(i + 1)
            .map_or(total, |next| samples_for(next.0).min(total));
        let half = 2 * usize::from(divider);
        for (n, s) in samples[from..to].iter_mut().enumerate() {
            *s = if (n / half) % 2 == 0 { level } else { -level };
        }
    }
    Ok(PcmBuffer { samples })
}

/// Canonical 44-byte RIFF/WAVE header followed by little-endian samples.
pub fn write_wav(pcm: &PcmBuffer) -> Vec<u8> {
    const CHANNELS: u16 = 1;
    const BITS: u16 = 16;
    let block_align = CHANNELS * BITS / 8;
    let byte_rate = SAMPLE_RATE * u32::from(block_align);
    let data_len = (pcm.samples.len() * 2) as u32;

    let mut out = Vec::with_capacity(WAV_HEADER_LEN + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&BITS.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &pcm.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Sign changes in the first `window_ms` of the buffer, halved and scaled to
/// Hz. Zero samples do not count as a sign.
pub fn measure_frequency(pcm: &PcmBuffer, window_ms: Millis) -> Result<f64, RenderError> {
    if window_ms <= Millis::from_integer(0) {
        return Err(RenderError::EmptyWindow);
    }
    let window = samples_for(window_ms);
    if window > pcm.samples.len() {
        return Err(RenderError::WindowTooLong {
            window,
            len: pcm.samples.len(),
        });
    }
    let mut crossings = 0u64;
    let mut last_sign = 0i32;
    for &s in &pcm.samples[..window] {
        let sign = i32::from(s.signum());
        if sign != 0 {
            if last_sign != 0 && sign != last_sign {
                crossings += 1;
            }
            last_sign = sign;
        }
    }
    let seconds = window as f64 / f64::from(SAMPLE_RATE);
    Ok(crossings as f64 / 2.0 / seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Millis {
        Millis::from_integer(v)
    }

    fn tl(entries: &[(u64, u8)]) -> BeepTimeline {
        BeepTimeline::from_entries(entries.iter().map(|&(t, d)| (ms(t), d)).collect()).unwrap()
    }

    /// Counts sign flips between consecutive nonzero samples, written
    /// independently of `measure_frequency`.
    fn zero_crossings(samples: &[i16]) -> usize {
        let nonzero: Vec<i16> = samples.iter().copied().filter(|s| *s != 0).collect();
        nonzero.windows(2).filter(|w| (w[0] > 0) != (w[1] > 0)).count()
    }

    #[test]
    fn silence() {
        let pcm = timeline_to_pcm(&tl(&[(0, 0)]), ms(1000), &RenderConfig::default()).unwrap();
        assert_eq!(pcm.len(), 48_000);
        assert!(pcm.samples.iter().all(|s| *s == 0));
        assert_eq!(measure_frequency(&pcm, ms(1000)).unwrap(), 0.0);
    }

    #[test]
    fn divider_100_is_120hz() {
        let pcm = timeline_to_pcm(&tl(&[(0, 100), (1000, 0)]), ms(1000), &RenderConfig::default()).unwrap();
        let zc = zero_crossings(&pcm.samples) as i64;
        assert!((zc - 240).abs() <= 2, "{zc}");
        let f = measure_frequency(&pcm, ms(1000)).unwrap();
        assert!((f - 120.0).abs() <= 1.0, "{f}");
    }

    #[test]
    fn divider_240_is_50hz() {
        let pcm = timeline_to_pcm(&tl(&[(0, 240)]), ms(1000), &RenderConfig::default()).unwrap();
        let f = measure_frequency(&pcm, ms(1000)).unwrap();
        assert!((f - 50.0).abs() <= 1.0, "{f}");
    }

    #[test]
    fn divider_1_blocks_of_two() {
        let pcm = timeline_to_pcm(&tl(&[(0, 1)]), ms(1), &RenderConfig::default()).unwrap();
        assert_eq!(pcm.len(), 48);
        let level = RenderConfig::default().level();
        for (n, s) in pcm.samples.iter().enumerate() {
            let expected = if (n / 2) % 2 == 0 { level } else { -level };
            assert_eq!(*s, expected, "sample {n}");
        }
    }

    #[test]
    fn phase_resets_per_entry() {
        // divider 5 has 10-sample half periods; a free-running wave would be
        // low at sample 50, a restarted one stays high until 58
        let pcm = timeline_to_pcm(&tl(&[(0, 5), (1, 5)]), ms(2), &RenderConfig::default()).unwrap();
        assert!(pcm.samples[50] > 0 && pcm.samples[57] > 0 && pcm.samples[58] < 0);
    }

    #[test]
    fn leading_silence_before_first_entry() {
        let pcm = timeline_to_pcm(&tl(&[(10, 5)]), ms(20), &RenderConfig::default()).unwrap();
        assert!(pcm.samples[..480].iter().all(|s| *s == 0));
        assert!(pcm.samples[480] > 0);
    }

    #[test]
    fn end_before_last_entry() {
        let r = timeline_to_pcm(&tl(&[(0, 5), (100, 0)]), ms(50), &RenderConfig::default());
        assert!(matches!(r, Err(RenderError::EndBeforeLastEntry { .. })));
    }

    #[test]
    fn fractional_end_rounds() {
        let pcm = timeline_to_pcm(&BeepTimeline::new(), Millis::new(1, 96), &RenderConfig::default()).unwrap();
        assert_eq!(pcm.len(), 1);
        let pcm = timeline_to_pcm(&BeepTimeline::new(), Millis::new(1, 97), &RenderConfig::default()).unwrap();
        assert_eq!(pcm.len(), 0);
    }

    #[test]
    fn amplitude_bounds() {
        assert!(RenderConfig::new(0.0).is_err());
        assert!(RenderConfig::new(1.5).is_err());
        assert_eq!(RenderConfig::new(1.0).unwrap().level(), i16::MAX);
    }

    #[test]
    fn wav_header() {
        let empty = write_wav(&PcmBuffer::default());
        assert_eq!(empty.len(), 44);
        assert_eq!(&empty[0..4], b"RIFF");
        assert_eq!(&empty[8..12], b"WAVE");
        assert_eq!(&empty[40..44], &[0, 0, 0, 0]);
        let expected_header: [u8; 44] = [
            b'R', b'I', b'F', b'F', 36, 0, 0, 0, b'W', b'A', b'V', b'E', b'f', b'm', b't', b' ',
            16, 0, 0, 0, 1, 0, 1, 0, 0x80, 0xBB, 0, 0, 0x00, 0x77, 0x01, 0, 2, 0, 16, 0, b'd',
            b'a', b't', b'a', 0, 0, 0, 0,
        ];
        assert_eq!(empty, expected_header);

        let pcm = PcmBuffer {
            samples: vec![0; 48_000],
        };
        let wav = write_wav(&pcm);
        assert_eq!(wav.len(), 96_044);
        assert_eq!(u32::from_le_bytes(wav[40..44].try_into().unwrap()), 96_000);
        assert_eq!(u32::from_le_bytes(wav[4..8].try_into().unwrap()), 96_036);

        let wav = write_wav(&PcmBuffer {
            samples: vec![1, -2],
        });
        assert_eq!(&wav[44..], &[1, 0, 0xFE, 0xFF]);
    }

    #[test]
    fn measure_window_errors() {
        let pcm = PcmBuffer { samples: vec![0; 10] };
        assert_eq!(measure_frequency(&pcm, ms(0)), Err(RenderError::EmptyWindow));
        assert!(matches!(
            measure_frequency(&pcm, ms(1)),
            Err(RenderError::WindowTooLong { .. })
        ));
    }
}
