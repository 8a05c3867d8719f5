//! Append-only record file backing an in-memory account store.
//!
//! Every registration appends a line; a delayed signal assignment appends the
//! updated record. On load, the last line for a user wins.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use pwsignal_core::authsim::{AccountRecord, AccountStore, LoginOutcome, PasswordHasher, Signaler};
use rand::RngCore;

use crate::error::{format_err, io_at, Error, Result};
use crate::formats::{parse_record, record_to_line};

pub struct FileStore {
    path: PathBuf,
    file: File,
    store: AccountStore,
}

impl FileStore {
    /// Opens or creates the record file at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut store = AccountStore::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_at(path))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_at(path))?;
                if line.is_empty() {
                    continue;
                }
                let record = parse_record(&line).map_err(|e| match e {
                    Error::Format { what, reason } => {
                        format_err(what, format!("line {}: {reason}", i + 1))
                    }
                    e => e,
                })?;
                store.restore(record);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_at(path))?;
        Ok(Self { path: path.to_path_buf(), file, store })
    }

    pub fn store(&self) -> &AccountStore {
        &self.store
    }

    fn append(&mut self, record: &AccountRecord) -> Result<()> {
        writeln!(self.file, "{}", record_to_line(record)).map_err(io_at(&self.path))
    }

    pub fn register<R: RngCore + ?Sized>(
        &mut self,
        user: &str,
        password: &str,
        signaler: Option<&Signaler<'_>>,
        hasher: &dyn PasswordHasher,
        rng: &mut R,
    ) -> Result<AccountRecord> {
        if user.is_empty() || user.contains(['\t', '\n', '\r']) {
            return Err(format_err("record", format!("user name {user:?} cannot be stored")));
        }
        let record = self.store.register(user, password, signaler, hasher, rng)?.clone();
        self.append(&record)?;
        Ok(record)
    }

    pub fn login<R: RngCore + ?Sized>(
        &mut self,
        user: &str,
        attempt: &str,
        signaler: Option<&Signaler<'_>>,
        hasher: &dyn PasswordHasher,
        rng: &mut R,
    ) -> Result<LoginOutcome> {
        let outcome = self.store.login(user, attempt, signaler, hasher, rng);
        if let LoginOutcome::Success { signal_assigned: true } = outcome {
            let record = self.store.get(user).expect("just logged in").clone();
            self.append(&record)?;
        }
        Ok(outcome)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush().map_err(io_at(&self.path))
    }
}
