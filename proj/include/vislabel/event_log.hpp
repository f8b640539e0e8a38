#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vislabel/error.hpp"
#include "vislabel/events.hpp"
#include "vislabel/ingest.hpp"

namespace vislabel {

namespace detail {

// Append-only file handle; every write is fsync'd before returning.
class DurableFile {
 public:
  explicit DurableFile(const std::filesystem::path& path)
      : fd_(::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644)) {
    if (fd_ < 0)
      throw Error("io_error", "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  DurableFile(const DurableFile&) = delete;
  DurableFile& operator=(const DurableFile&) = delete;
  ~DurableFile() {
    if (fd_ >= 0) ::close(fd_);
  }

  void write_line(std::string_view line) {
    std::string buf(line);
    buf += '\n';
    std::size_t off = 0;
    while (off < buf.size()) {
      auto n = ::write(fd_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("io_error", std::string("event log write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0)
      throw Error("io_error", std::string("event log fsync failed: ") + std::strerror(errno));
  }

 private:
  int fd_;
};

}  // namespace detail

// Ordered, append-only sequence of campaign events with strictly increasing
// sequence numbers. Optionally mirrored to a newline-delimited JSON file.
class EventLog {
 public:
  EventLog() = default;

  // Loads any existing records from `path` and appends new ones to it.
  static EventLog open(const std::filesystem::path& path) {
    EventLog log;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::stringstream ss;
      ss << in.rdbuf();
      log = parse(ss.str());
    }
    log.file_ = std::make_shared<detail::DurableFile>(path);
    return log;
  }

  static EventLog parse(std::string_view document) {
    EventLog log;
    for (const auto& [line_no, line] : detail::split_lines(document)) {
      auto e = event_from_json(detail::parse_json_line(line, line_no));
      if (!log.events_.empty() && e.seq <= log.events_.back().seq)
        throw IntegrityError("line " + std::to_string(line_no) + ": sequence number " +
                             std::to_string(e.seq) + " is not increasing");
      log.events_.push_back(std::move(e));
    }
    return log;
  }

  std::span<const Event> events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  std::uint64_t last_seq() const noexcept { return events_.empty() ? 0 : events_.back().seq; }

  std::uint64_t append(EventBody body, std::int64_t timestamp) {
    return append(Event{last_seq() + 1, timestamp, std::move(body)});
  }

  std::uint64_t append(Event e) {
    if (e.seq <= last_seq())
      throw IntegrityError("sequence number " + std::to_string(e.seq) + " does not follow " +
                           std::to_string(last_seq()));
    if (file_) file_->write_line(event_to_json(e).dump());
    events_.push_back(std::move(e));
    return events_.back().seq;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& e : events_) out += event_to_json(e).dump() + "\n";
    return out;
  }

  // Copy of the records without the file mirror.
  EventLog detached() const {
    EventLog copy;
    copy.events_ = events_;
    return copy;
  }

  std::size_t command_count() const {
    std::size_t n = 0;
    for (const auto& e : events_) n += is_command(e.body);
    return n;
  }

 private:
  std::vector<Event> events_;
  std::shared_ptr<detail::DurableFile> file_;
};

}  // namespace vislabel
