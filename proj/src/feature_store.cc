// Copyright 2026 The VPG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vpg/feature_store.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "byte_io.h"
#include "vpg/errors.h"
#include "vpg/log.h"

namespace vpg {

namespace fs = std::filesystem;

namespace {

constexpr size_t kFrameHeader = 8;
constexpr char kManifestMagic[] = "VPGSTORE";
constexpr int kManifestVersion = 1;

uint32_t checksum(std::string_view payload) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

std::string frame(std::string_view payload) {
  internal::ByteWriter w;
  w.put<uint32_t>(static_cast<uint32_t>(payload.size()));
  w.put<uint32_t>(checksum(payload));
  w.put_bytes(payload);
  return std::move(w.str());
}

std::string errno_message(const std::string& what) { return what + ": " + std::strerror(errno); }

void write_fully(int fd, std::string_view data, uint64_t offset) {
  size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::pwrite(fd, data.data() + done, data.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError(errno_message("segment write failed"));
    }
    done += static_cast<size_t>(n);
  }
}

bool read_fully(int fd, char* buf, size_t len, uint64_t offset) {
  size_t done = 0;
  while (done < len) {
    ssize_t n = ::pread(fd, buf + done, len - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StoreError(errno_message("segment read failed"));
    }
    if (n == 0) return false;
    done += static_cast<size_t>(n);
  }
  return true;
}

ImageSignature signature_of_payload(std::string_view payload) {
  // Payload layout starts with [schema u8][signature 16B].
  if (payload.size() < 17) throw FormatError("scene record too short");
  ImageSignature sig;
  std::memcpy(sig.bytes.data(), payload.data() + 1, 16);
  return sig;
}

}  // namespace

ScenePredicate domain_is(Domain d) {
  return [d](const SceneEntry& e) { return e.metadata && e.metadata->domain == d; };
}

std::unique_ptr<FeatureStore> FeatureStore::open(const fs::path& dir) { return open(dir, Options{}); }

std::unique_ptr<FeatureStore> FeatureStore::open(const fs::path& dir, Options options) {
  std::unique_ptr<FeatureStore> store(new FeatureStore(dir, std::move(options)));
  store->load();
  return store;
}

FeatureStore::FeatureStore(fs::path dir, Options options) : dir_(std::move(dir)), options_(std::move(options)) {}

FeatureStore::~FeatureStore() {
  for (auto& [id, seg] : segments_) {
    if (seg.fd >= 0) {
      ::fsync(seg.fd);
      ::close(seg.fd);
    }
  }
}

fs::path FeatureStore::segment_path(uint32_t id) const {
  char name[32];
  std::snprintf(name, sizeof(name), "%06u.log", id);
  return dir_ / "segments" / name;
}

void FeatureStore::write_manifest() {
  const fs::path tmp = dir_ / "MANIFEST.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << kManifestMagic << ' ' << kManifestVersion << '\n';
    for (const auto& [id, seg] : segments_) out << "segment " << id << '\n';
    out.flush();
    if (!out) throw StoreError("failed to write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, dir_ / "MANIFEST", ec);
  if (ec) throw StoreError("failed to install MANIFEST: " + ec.message());
}

uint32_t FeatureStore::create_segment() {
  const uint32_t id = next_segment_id_++;
  int fd = ::open(segment_path(id).c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw StoreError(errno_message("cannot create segment " + segment_path(id).string()));
  std::unique_lock lock(index_mu_);
  segments_[id] = Segment{fd, 0};
  return id;
}

void FeatureStore::load() {
  std::error_code ec;
  fs::create_directories(dir_ / "segments", ec);
  if (ec) throw StoreError("cannot create store directory " + dir_.string() + ": " + ec.message());

  std::vector<uint32_t> listed;
  const fs::path manifest = dir_ / "MANIFEST";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kManifestMagic || version != kManifestVersion) {
      throw StoreError("unrecognized MANIFEST in " + dir_.string());
    }
    std::string word;
    uint32_t id;
    while (in >> word >> id) {
      if (word != "segment") throw StoreError("malformed MANIFEST line: " + word);
      listed.push_back(id);
    }
  }

  // Segments not named by the manifest are leftovers of an interrupted compaction.
  std::set<uint32_t> keep(listed.begin(), listed.end());
  for (const auto& file : fs::directory_iterator(dir_ / "segments")) {
    uint32_t id = 0;
    try {
      id = static_cast<uint32_t>(std::stoul(file.path().stem().string()));
    } catch (const std::exception&) {
      continue;
    }
    if (!keep.count(id)) fs::remove(file.path(), ec);
    next_segment_id_ = std::max(next_segment_id_, id + 1);
  }

  for (uint32_t id : listed) {
    next_segment_id_ = std::max(next_segment_id_, id + 1);
    int fd = ::open(segment_path(id).c_str(), O_RDWR);
    if (fd < 0) throw StoreError(errno_message("cannot open segment " + segment_path(id).string()));
    segments_[id] = Segment{fd, 0};
  }
  for (size_t i = 0; i < listed.size(); ++i) replay_segment(listed[i], i + 1 == listed.size());

  if (segments_.empty()) {
    active_segment_ = create_segment();
    write_manifest();
  } else {
    active_segment_ = segments_.rbegin()->first;
  }
}

void FeatureStore::replay_segment(uint32_t id, bool is_last) {
  Segment& seg = segments_.at(id);
  struct stat st {};
  if (::fstat(seg.fd, &st) != 0) throw StoreError(errno_message("stat failed"));
  const uint64_t file_size = static_cast<uint64_t>(st.st_size);

  uint64_t offset = 0;
  std::string payload;
  while (offset < file_size) {
    char header[kFrameHeader];
    bool ok = offset + kFrameHeader <= file_size && read_fully(seg.fd, header, kFrameHeader, offset);
    uint32_t len = 0, crc = 0;
    if (ok) {
      std::memcpy(&len, header, 4);
      std::memcpy(&crc, header + 4, 4);
      ok = offset + kFrameHeader + len <= file_size;
    }
    if (ok) {
      payload.resize(len);
      ok = read_fully(seg.fd, payload.data(), len, offset + kFrameHeader) && checksum(payload) == crc &&
           payload.size() >= 17;
    }
    if (!ok) {
      if (!is_last) throw StoreError("corrupt record in sealed segment " + segment_path(id).string());
      log_event(LogLevel::kWarn, "store.truncate_torn_tail",
                {{"segment", id}, {"offset", offset}, {"dropped_bytes", file_size - offset}});
      if (::ftruncate(seg.fd, static_cast<off_t>(offset)) != 0) throw StoreError(errno_message("truncate failed"));
      break;
    }
    const uint32_t framed = static_cast<uint32_t>(kFrameHeader + len);
    const ImageSignature sig = signature_of_payload(payload);
    auto [it, inserted] = index_.try_emplace(sig, Location{id, offset, framed});
    if (!inserted) {
      live_bytes_ -= it->second.length;
      it->second = Location{id, offset, framed};
    }
    live_bytes_ += framed;
    total_bytes_ += framed;
    offset += framed;
  }
  seg.size = offset;
}

std::string FeatureStore::read_record(const Location& loc) const {
  const Segment& seg = segments_.at(loc.segment);
  std::string buf(loc.length, '\0');
  if (!read_fully(seg.fd, buf.data(), loc.length, loc.offset)) throw StoreError("short read from segment");
  uint32_t crc;
  std::memcpy(&crc, buf.data() + 4, 4);
  std::string payload = buf.substr(kFrameHeader);
  if (checksum(payload) != crc) throw StoreError("checksum mismatch reading store record");
  return payload;
}

void FeatureStore::append_locked(const SceneEntry& entry) {
  SceneEntry stamped = entry;
  if (stamped.ingested_at == 0) stamped.ingested_at = options_.clock();
  const std::string record = frame(encode_scene(stamped));

  {
    std::shared_lock lock(index_mu_);
    const Segment& active = segments_.at(active_segment_);
    if (active.size > 0 && active.size + record.size() > options_.segment_bytes) {
      lock.unlock();
      active_segment_ = create_segment();
      write_manifest();
    }
  }
  Segment& seg = segments_.at(active_segment_);
  const uint64_t offset = seg.size;
  write_fully(seg.fd, record, offset);
  if (options_.sync_writes && ::fdatasync(seg.fd) != 0) throw StoreError(errno_message("fdatasync failed"));

  std::unique_lock lock(index_mu_);
  seg.size += record.size();
  const Location loc{active_segment_, offset, static_cast<uint32_t>(record.size())};
  auto [it, inserted] = index_.try_emplace(stamped.signature, loc);
  if (!inserted) {
    live_bytes_ -= it->second.length;
    it->second = loc;
  }
  live_bytes_ += loc.length;
  total_bytes_ += loc.length;
}

size_t FeatureStore::backfill(std::span<const SceneEntry> entries) {
  size_t i = 0;
  return backfill([&]() -> std::optional<SceneEntry> {
    if (i == entries.size()) return std::nullopt;
    return entries[i++];
  });
}

size_t FeatureStore::backfill(const std::function<std::optional<SceneEntry>()>& next) {
  std::lock_guard lock(write_mu_);
  size_t written = 0;
  try {
    while (auto entry = next()) {
      SceneEntry e = std::move(*entry);
      e.source = EntrySource::kBackfill;
      append_locked(e);
      ++written;
    }
    maybe_compact_locked();
  } catch (const StoreError& err) {
    throw StoreError(std::string(err.what()) + " (backfill wrote " + std::to_string(written) +
                     " entries before failing)");
  }
  return written;
}

void FeatureStore::apply_update(const SceneEntry& entry) {
  std::lock_guard lock(write_mu_);
  append_locked(entry);
  maybe_compact_locked();
}

std::optional<SceneEntry> FeatureStore::get(const ImageSignature& sig) const {
  std::string payload;
  {
    std::shared_lock lock(index_mu_);
    auto it = index_.find(sig);
    if (it == index_.end()) return std::nullopt;
    payload = read_record(it->second);
  }
  return decode_scene(payload);
}

bool FeatureStore::contains(const ImageSignature& sig) const {
  std::shared_lock lock(index_mu_);
  return index_.count(sig) > 0;
}

LookupResult FeatureStore::get_or_extract(const ImageSignature& sig, const Extractor& extractor) {
  lookups_.fetch_add(1, std::memory_order_relaxed);
  if (auto found = get(sig)) {
    hits_.fetch_add(1, std::memory_order_relaxed);
    return {std::move(*found), true};
  }

  std::promise<SceneEntry> promise;
  std::shared_future<SceneEntry> pending;
  {
    std::lock_guard lock(inflight_mu_);
    if (auto it = inflight_.find(sig); it != inflight_.end()) {
      pending = it->second;
    } else {
      // A concurrent extraction may have completed between the first probe and here.
      if (auto found = get(sig)) {
        hits_.fetch_add(1, std::memory_order_relaxed);
        return {std::move(*found), true};
      }
      inflight_.emplace(sig, promise.get_future().share());
    }
  }
  if (pending.valid()) return {pending.get(), false};

  auto finish = [&] {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(sig);
  };
  extractions_.fetch_add(1, std::memory_order_relaxed);
  try {
    SceneEntry entry = extractor(sig);
    entry.signature = sig;
    entry.source = EntrySource::kOnlineFallback;
    if (entry.ingested_at == 0) entry.ingested_at = options_.clock();
    apply_update(entry);
    // Hand back the stored (half-precision) form so a miss and a later hit agree.
    entry = decode_scene(encode_scene(entry));
    promise.set_value(entry);
    finish();
    return {std::move(entry), false};
  } catch (const std::exception& e) {
    ExtractionError err("feature extraction failed for " + sig.to_hex() + ": " + e.what());
    promise.set_exception(std::make_exception_ptr(err));
    finish();
    throw err;
  }
}

void FeatureStore::scan(const ScenePredicate& predicate,
                        const std::function<void(const SceneEntry&)>& visit) const {
  std::vector<ImageSignature> keys;
  {
    std::shared_lock lock(index_mu_);
    keys.reserve(index_.size());
    for (const auto& [sig, loc] : index_) keys.push_back(sig);
  }
  std::sort(keys.begin(), keys.end());
  for (const auto& sig : keys) {
    auto entry = get(sig);
    if (entry && (!predicate || predicate(*entry))) visit(*entry);
  }
}

std::vector<SceneEntry> FeatureStore::scan(const ScenePredicate& predicate) const {
  std::vector<SceneEntry> out;
  scan(predicate, [&](const SceneEntry& e) { out.push_back(e); });
  return out;
}

StoreMetrics FeatureStore::metrics() const {
  StoreMetrics m;
  m.hits = hits_.load();
  m.lookups = lookups_.load();
  m.fallback_extractions = extractions_.load();
  return m;
}

void FeatureStore::reset_metrics() {
  lookups_ = 0;
  hits_ = 0;
  extractions_ = 0;
}

StoreStats FeatureStore::stats() const {
  std::shared_lock lock(index_mu_);
  return StoreStats{index_.size(), segments_.size(), total_bytes_, live_bytes_};
}

size_t FeatureStore::size() const {
  std::shared_lock lock(index_mu_);
  return index_.size();
}

void FeatureStore::maybe_compact_locked() {
  uint64_t total, live;
  {
    std::shared_lock lock(index_mu_);
    total = total_bytes_;
    live = live_bytes_;
  }
  if (total >= options_.compaction_min_bytes &&
      static_cast<double>(total - live) > options_.compaction_ratio * static_cast<double>(total)) {
    compact_locked();
  }
}

void FeatureStore::compact() {
  std::lock_guard lock(write_mu_);
  compact_locked();
}

void FeatureStore::compact_locked() {
  std::vector<std::pair<ImageSignature, Location>> live;
  {
    std::shared_lock lock(index_mu_);
    live.assign(index_.begin(), index_.end());
  }
  std::sort(live.begin(), live.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  const uint32_t id = next_segment_id_++;
  const fs::path path = segment_path(id);
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw StoreError(errno_message("cannot create segment " + path.string()));

  std::vector<std::pair<ImageSignature, Location>> moved;
  moved.reserve(live.size());
  uint64_t offset = 0;
  std::string buffer;
  for (const auto& [sig, loc] : live) {
    std::string raw(loc.length, '\0');
    {
      std::shared_lock lock(index_mu_);
      if (!read_fully(segments_.at(loc.segment).fd, raw.data(), loc.length, loc.offset)) {
        ::close(fd);
        throw StoreError("short read during compaction");
      }
    }
    moved.emplace_back(sig, Location{id, offset + buffer.size(), loc.length});
    buffer += raw;
    if (buffer.size() >= (4u << 20)) {
      write_fully(fd, buffer, offset);
      offset += buffer.size();
      buffer.clear();
    }
  }
  write_fully(fd, buffer, offset);
  offset += buffer.size();
  ::fsync(fd);

  std::vector<uint32_t> retired;
  {
    std::unique_lock lock(index_mu_);
    for (const auto& [sig, loc] : moved) index_[sig] = loc;
    for (auto& [old_id, seg] : segments_) {
      ::close(seg.fd);
      retired.push_back(old_id);
    }
    segments_.clear();
    segments_[id] = Segment{fd, offset};
    active_segment_ = id;
    total_bytes_ = live_bytes_ = offset;
  }
  write_manifest();
  std::error_code ec;
  for (uint32_t old_id : retired) fs::remove(segment_path(old_id), ec);
  log_event(LogLevel::kInfo, "store.compacted", {{"segment", id}, {"live_bytes", offset}, {"entries", moved.size()}});
}

void FeatureStore::flush() {
  std::lock_guard lock(write_mu_);
  std::shared_lock index_lock(index_mu_);
  for (auto& [id, seg] : segments_) ::fsync(seg.fd);
}

std::vector<SceneEntry> read_scenes_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot open " + path.string());
  std::vector<SceneEntry> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

void write_scenes_jsonl(const fs::path& path, std::span<const SceneEntry> scenes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StoreError("cannot write " + path.string());
  for (const auto& s : scenes) out << scene_to_json(s).dump() << '\n';
}

}  // namespace vpg
