#include "sentinel/journal.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace sentinel::agent {

namespace {

bool evictable(RecordKind k) { return k == RecordKind::ClipUpload || k == RecordKind::Status; }

std::filesystem::path sidecar(const std::filesystem::path& p) { return std::filesystem::path(p.string() + ".seq"); }

[[noreturn]] void io_fail(const std::string& what) { throw JournalError(what + ": " + std::strerror(errno)); }

}  // namespace

BackupJournal::BackupJournal(Options options) : options_(std::move(options)) {
  if (!options_.path.empty()) load();
}

BackupJournal::~BackupJournal() {
  if (fd_ >= 0) ::close(fd_);
}

BackupJournal::BackupJournal(BackupJournal&& other) noexcept
    : options_(std::move(other.options_)),
      records_(std::move(other.records_)),
      next_seq_(other.next_seq_),
      live_bytes_(other.live_bytes_),
      file_bytes_(other.file_bytes_),
      evicted_(other.evicted_),
      fd_(std::exchange(other.fd_, -1)) {}

BackupJournal& BackupJournal::operator=(BackupJournal&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    options_ = std::move(other.options_);
    records_ = std::move(other.records_);
    next_seq_ = other.next_seq_;
    live_bytes_ = other.live_bytes_;
    file_bytes_ = other.file_bytes_;
    evicted_ = other.evicted_;
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Bytes BackupJournal::encode(const JournalRecord& r) {
  Bytes out;
  out.reserve(r.encoded_size());
  put_u32(out, static_cast<std::uint32_t>(8 + 1 + r.payload.size()));
  put_u64(out, r.seq);
  put_u8(out, static_cast<std::uint8_t>(r.kind));
  put_bytes(out, r.payload);
  return out;
}

void BackupJournal::load() {
  if (options_.path.has_parent_path()) std::filesystem::create_directories(options_.path.parent_path());

  Bytes data;
  {
    std::ifstream in(options_.path, std::ios::binary);
    if (in) data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  std::size_t good = 0;
  Reader in(data);
  while (in.remaining() >= 4) {
    const std::uint32_t len = in.u32();
    if (len < 9 || in.remaining() < len) break;
    JournalRecord r;
    r.seq = in.u64();
    r.kind = static_cast<RecordKind>(in.u8());
    auto payload = in.take(len - 9);
    r.payload.assign(payload.begin(), payload.end());
    live_bytes_ += r.encoded_size();
    next_seq_ = std::max(next_seq_, r.seq + 1);
    records_.push_back(std::move(r));
    good = in.position();
  }

  std::ifstream seq_in(sidecar(options_.path));
  std::uint64_t persisted = 0;
  if (seq_in >> persisted) next_seq_ = std::max(next_seq_, persisted);

  fd_ = ::open(options_.path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
  if (fd_ < 0) io_fail("cannot open journal " + options_.path.string());
  if (good != data.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(good)) != 0) io_fail("cannot truncate journal tail");
  }
  file_bytes_ = good;
}

void BackupJournal::write_all(ByteView data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd_, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("journal write failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (options_.sync && ::fdatasync(fd_) != 0) io_fail("journal sync failed");
}

void BackupJournal::append(JournalRecord record) {
  if (record.seq != next_seq_) throw JournalError("journal append out of sequence");
  const std::size_t need = record.encoded_size();
  bool removed = false;
  while (live_bytes_ + need > options_.capacity_bytes) {
    auto victim = std::find_if(records_.begin(), records_.end(), [](const auto& r) { return evictable(r.kind); });
    if (victim == records_.end()) break;
    live_bytes_ -= victim->encoded_size();
    records_.erase(victim);
    ++evicted_;
    removed = true;
  }
  if (live_bytes_ + need > options_.capacity_bytes && evictable(record.kind)) {
    if (removed) rewrite();
    throw StorageFull("journal full; dropping record " + std::to_string(record.seq));
  }
  if (removed) rewrite();

  if (fd_ >= 0) {
    auto bytes = encode(record);
    write_all(bytes);
    file_bytes_ += bytes.size();
  }
  live_bytes_ += need;
  next_seq_ = record.seq + 1;
  records_.push_back(std::move(record));
}

bool BackupJournal::acknowledge(std::uint64_t seq) {
  auto it = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.seq == seq; });
  if (it == records_.end()) return false;
  live_bytes_ -= it->encoded_size();
  records_.erase(it);
  if (fd_ >= 0) {
    const std::size_t dead = file_bytes_ - live_bytes_;
    if (records_.empty() || dead > std::max<std::size_t>(1u << 20, live_bytes_)) rewrite();
  }
  return true;
}

void BackupJournal::write_seq_sidecar() {
  const auto path = sidecar(options_.path);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << next_seq_ << "\n";
    if (!out) throw JournalError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void BackupJournal::rewrite() {
  if (fd_ < 0) return;
  write_seq_sidecar();
  const auto tmp = std::filesystem::path(options_.path.string() + ".tmp");
  int out = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (out < 0) io_fail("cannot create " + tmp.string());
  Bytes all;
  for (const auto& r : records_) {
    auto b = encode(r);
    all.insert(all.end(), b.begin(), b.end());
  }
  std::size_t done = 0;
  while (done < all.size()) {
    const ssize_t n = ::write(out, all.data() + done, all.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(out);
      io_fail("journal compaction failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (options_.sync) ::fdatasync(out);
  ::close(out);
  std::filesystem::rename(tmp, options_.path);
  ::close(fd_);
  fd_ = ::open(options_.path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (fd_ < 0) io_fail("cannot reopen journal");
  file_bytes_ = all.size();
}

}  // namespace sentinel::agent
