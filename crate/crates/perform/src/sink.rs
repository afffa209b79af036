//! Destinations for rendered audio blocks.

use std::fs::File;
use std::io::{self, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use log::warn;
use starlight_core::synth::{quantize_sample, wav_header};

pub trait AudioSink: Send {
    fn write_block(&mut self, block: &[f32]) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// 16-bit mono WAV that grows while the engine runs. The header sizes are
/// rewritten about once per second of audio and on `finish`, so the file is
/// always readable.
pub struct WavSink {
    out: BufWriter<File>,
    sample_rate: u32,
    frames: u64,
    frames_since_patch: u64,
}

impl WavSink {
    pub fn create(path: &Path, sample_rate: u32) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&wav_header(sample_rate, 0))?;
        Ok(Self { out, sample_rate, frames: 0, frames_since_patch: 0 })
    }

    fn patch_header(&mut self) -> io::Result<()> {
        let data_bytes = u32::try_from(self.frames * 2).unwrap_or(u32::MAX - 36);
        self.out.flush()?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(0))?;
        file.write_all(&wav_header(self.sample_rate, data_bytes))?;
        file.seek(SeekFrom::End(0))?;
        self.frames_since_patch = 0;
        Ok(())
    }
}

impl AudioSink for WavSink {
    fn write_block(&mut self, block: &[f32]) -> io::Result<()> {
        for &s in block {
            self.out.write_all(&quantize_sample(s as f64).to_le_bytes())?;
        }
        self.frames += block.len() as u64;
        self.frames_since_patch += block.len() as u64;
        if self.frames_since_patch >= self.sample_rate as u64 {
            self.patch_header()?;
        }
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.patch_header()?;
        self.out.flush()
    }
}

/// Discards audio.
pub struct NullSink;

impl AudioSink for NullSink {
    fn write_block(&mut self, _: &[f32]) -> io::Result<()> {
        Ok(())
    }
}

/// Hands blocks to another thread; blocks are dropped when the receiver
/// falls behind rather than stalling the audio thread.
pub struct ChannelSink(pub mpsc::SyncSender<Vec<f32>>);

impl AudioSink for ChannelSink {
    fn write_block(&mut self, block: &[f32]) -> io::Result<()> {
        match self.0.try_send(block.to_vec()) {
            Ok(()) | Err(mpsc::TrySendError::Full(_)) => Ok(()),
            Err(mpsc::TrySendError::Disconnected(_)) => Err(io::Error::new(io::ErrorKind::BrokenPipe, "receiver gone")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SinkSpec {
    /// The system sound device.
    Device,
    Wav(PathBuf),
    Null,
}

/// Opens the requested sink. A device that cannot be opened falls back to a
/// WAV file at `fallback`, with a warning.
pub fn open_sink(spec: &SinkSpec, sample_rate: u32, fallback: &Path) -> io::Result<Box<dyn AudioSink>> {
    match spec {
        SinkSpec::Wav(path) => Ok(Box::new(WavSink::create(path, sample_rate)?)),
        SinkSpec::Null => Ok(Box::new(NullSink)),
        SinkSpec::Device => {
            let err = open_device(sample_rate).err().unwrap_or_else(|| "unavailable".into());
            warn!("audio device failed ({err}); writing to {} instead", fallback.display());
            Ok(Box::new(WavSink::create(fallback, sample_rate)?))
        }
    }
}

// This build carries no sound-device backend.
fn open_device(_sample_rate: u32) -> Result<(), String> {
    Err("no audio device backend in this build".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_sink_keeps_header_current() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roll.wav");
        let mut sink = WavSink::create(&path, 8000).unwrap();
        for _ in 0..20 {
            sink.write_block(&[0.5; 512]).unwrap();
        }
        // 10240 frames written, header patched after 8192
        let mid = hound::WavReader::open(&path).unwrap();
        assert_eq!(mid.duration(), 8192);
        sink.finish().unwrap();
        let r = hound::WavReader::open(&path).unwrap();
        assert_eq!(r.duration(), 10_240);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 44 + 20_480);
    }

    #[test]
    fn device_falls_back_to_wav() {
        let dir = tempfile::tempdir().unwrap();
        let fallback = dir.path().join("fallback.wav");
        let mut sink = open_sink(&SinkSpec::Device, 44_100, &fallback).unwrap();
        sink.write_block(&[0.0; 16]).unwrap();
        sink.finish().unwrap();
        assert!(fallback.exists());
    }
}
