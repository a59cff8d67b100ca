#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"
#include "kcforge/scorer.hpp"

#include <spdlog/spdlog.h>

namespace kcforge {

namespace {

bool is_hex_key(std::string_view s) {
    if (s.size() != 64) return false;
    for (char c : s) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

} // namespace

std::optional<CacheEntry> parse_cache_line(std::string_view line) {
    auto sp1 = line.find(' ');
    if (sp1 == std::string_view::npos) return std::nullopt;
    auto sp2 = line.find(' ', sp1 + 1);
    if (sp2 == std::string_view::npos) return std::nullopt;
    auto sp3 = line.find(' ', sp2 + 1);
    if (sp3 == std::string_view::npos || sp3 + 1 >= line.size()) return std::nullopt;

    CacheEntry e;
    e.key = std::string(line.substr(0, sp1));
    if (!is_hex_key(e.key)) return std::nullopt;
    try {
        e.logprob = io::parse_double(line.substr(sp1 + 1, sp2 - sp1 - 1), "logprob");
        e.token_count = io::parse_int(line.substr(sp2 + 1, sp3 - sp2 - 1), "token_count");
    } catch (const ParseError&) {
        return std::nullopt;
    }
    if (e.token_count < 0) return std::nullopt;
    e.model_id = std::string(line.substr(sp3 + 1));
    return e;
}

std::string format_cache_line(const CacheEntry& e) {
    return e.key + ' ' + io::format_shortest(e.logprob) + ' ' + std::to_string(e.token_count) + ' ' +
           e.model_id;
}

ScoreCache::ScoreCache(std::filesystem::path path, bool strict) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::string text;
    if (std::filesystem::exists(path_)) text = io::read_file(path_);

    std::size_t start = 0;
    std::size_t line_no = 0;
    std::size_t complete_bytes = 0;
    while (start < text.size()) {
        ++line_no;
        auto nl = text.find('\n', start);
        if (nl == std::string::npos) {
            // No terminating LF: an interrupted append.
            if (strict) throw ParseError(path_.string() + " line " + std::to_string(line_no) + ": truncated entry");
            spdlog::warn("score cache {}: skipping truncated final line {}", path_.string(), line_no);
            ++skipped_;
            break;
        }
        std::string_view line(text.data() + start, nl - start);
        complete_bytes = nl + 1;
        start = nl + 1;
        if (line.empty()) continue;
        auto entry = parse_cache_line(line);
        if (!entry) {
            if (strict) throw ParseError(path_.string() + " line " + std::to_string(line_no) + ": malformed entry");
            spdlog::warn("score cache {}: skipping malformed line {}", path_.string(), line_no);
            ++skipped_;
            continue;
        }
        entries_.insert_or_assign(entry->key, std::move(*entry));
    }
    if (complete_bytes < text.size()) std::filesystem::resize_file(path_, complete_bytes);

    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw InputError("cannot open score cache " + path_.string() + " for append");
}

std::optional<CacheEntry> ScoreCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ScoreCache::append(const CacheEntry& entry) {
    std::string line = format_cache_line(entry) + '\n';
    std::lock_guard lock(mutex_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw InputError("append to score cache " + path_.string() + " failed");
    entries_.insert_or_assign(entry.key, entry);
}

std::size_t ScoreCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

} // namespace kcforge
