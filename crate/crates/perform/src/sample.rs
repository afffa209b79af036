//! Loading sample-slot audio from PCM WAV files.

use std::path::Path;
use std::sync::Arc;

use hound::{SampleFormat, WavReader};

/// Reads a mono or stereo WAV (integer PCM or 32-bit float), averages
/// stereo to mono and resamples linearly to `target_rate`.
pub fn load_wav_sample(path: &Path, target_rate: u32) -> Result<Arc<[f32]>, String> {
    let reader = WavReader::open(path).map_err(|e| format!("cannot load {}: {e}", path.display()))?;
    let spec = reader.spec();
    if !(1..=2).contains(&spec.channels) {
        return Err(format!("{}: {} channels; only mono and stereo are supported", path.display(), spec.channels));
    }
    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader.into_samples::<f32>().collect::<Result<_, _>>(),
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader.into_samples::<i32>().map(|s| s.map(|v| v as f32 * scale)).collect::<Result<_, _>>()
        }
    }
    .map_err(|e| format!("{}: {e}", path.display()))?;

    let mono: Vec<f32> = if spec.channels == 2 {
        interleaved.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    } else {
        interleaved
    };
    Ok(resample_linear(&mono, spec.sample_rate, target_rate).into())
}

pub fn resample_linear(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }
    let ratio = from_rate as f64 / to_rate as f64;
    let out_len = ((input.len() as f64) / ratio).floor().max(1.0) as usize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            let frac = (pos - k as f64) as f32;
            let a = input[k.min(input.len() - 1)];
            let b = input[(k + 1).min(input.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, channels: u16, rate: u32, frames: &[i16]) {
        let spec = hound::WavSpec { channels, sample_rate: rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for s in frames {
            w.write_sample(*s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write(&p, 2, 44_100, &[16_384, 0, -16_384, -16_384]);
        let s = load_wav_sample(&p, 44_100).unwrap();
        assert_eq!(&*s, &[0.25, -0.5]);
    }

    #[test]
    fn resamples_to_engine_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.wav");
        write(&p, 1, 22_050, &[0; 2205]);
        assert_eq!(load_wav_sample(&p, 44_100).unwrap().len(), 4410);
        let up = resample_linear(&[0.0, 1.0], 1, 2);
        assert_eq!(up, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn missing_file() {
        assert!(load_wav_sample(Path::new("/nonexistent.wav"), 44_100).is_err());
    }
}
