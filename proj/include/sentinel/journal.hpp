#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <stdexcept>

#include "sentinel/bytes.hpp"

namespace sentinel::agent {

/// Record kinds share their codes with the envelope msg_type.
enum class RecordKind : std::uint8_t { Status = 0x04, FireAlert = 0x06, MotionEvent = 0x07, ClipUpload = 0x08 };

struct JournalRecord {
  std::uint64_t seq = 0;
  RecordKind kind = RecordKind::Status;
  Bytes payload;

  bool operator==(const JournalRecord&) const = default;
  std::size_t encoded_size() const { return 4 + 8 + 1 + payload.size(); }
};

class JournalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StorageFull : public JournalError {
 public:
  using JournalError::JournalError;
};

/// Store-and-forward backlog of unacknowledged records.
///
/// File layout: repeated u32-BE length | u64-BE seq | u8 kind | payload, where
/// length counts the bytes after itself. A truncated tail record is dropped on
/// load. Acknowledged records leave the in-memory backlog immediately; the file
/// is compacted lazily, so a crash can resurrect acked records (the server
/// deduplicates them). The next sequence number survives compaction in a
/// `<path>.seq` sidecar.
class BackupJournal {
 public:
  struct Options {
    std::filesystem::path path;  // empty: memory only
    std::size_t capacity_bytes = 64u * 1024u * 1024u;
    bool sync = true;  // fsync after every append
  };

  explicit BackupJournal(Options options);
  ~BackupJournal();
  BackupJournal(BackupJournal&& other) noexcept;
  BackupJournal& operator=(BackupJournal&& other) noexcept;
  BackupJournal(const BackupJournal&) = delete;
  BackupJournal& operator=(const BackupJournal&) = delete;

  std::uint64_t next_seq() const { return next_seq_; }

  /// Durable before returning. `record.seq` must equal next_seq(). Clip and
  /// status records are evicted oldest-first when over capacity; alerts never
  /// are. Throws StorageFull if the new record is evictable and cannot fit.
  void append(JournalRecord record);

  /// Removes the record with this seq. Returns false if it was not pending.
  bool acknowledge(std::uint64_t seq);

  const std::deque<JournalRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  std::size_t bytes() const { return live_bytes_; }
  std::size_t evicted() const { return evicted_; }

  static Bytes encode(const JournalRecord& r);

 private:
  void load();
  void rewrite();
  void write_seq_sidecar();
  void write_all(ByteView data);

  Options options_;
  std::deque<JournalRecord> records_;
  std::uint64_t next_seq_ = 1;
  std::size_t live_bytes_ = 0;
  std::size_t file_bytes_ = 0;
  std::size_t evicted_ = 0;
  int fd_ = -1;
};

}  // namespace sentinel::agent
