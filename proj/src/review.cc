#include "skelpose/review.h"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "skelpose/errors.h"

namespace skelpose {

namespace fs = std::filesystem;

ReviewStore::ReviewStore(const std::string &batch_dir)
    : ReviewStore(batch_dir, (fs::path(batch_dir) / "verdicts.jsonl").string()) {}

ReviewStore::ReviewStore(const std::string &batch_dir, const std::string &log_path) : log_path_(log_path) {
    load(batch_dir);
    replay();
}

void ReviewStore::load(const std::string &batch_dir) {
    if (!fs::is_directory(batch_dir))
        throw Error(ErrorKind::IO, "not a directory: " + batch_dir);
    std::vector<fs::path> files;
    for (const auto &e : fs::directory_iterator(batch_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json")
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path &p : files) {
        const json record = read_json_file(p.string());
        if (!record.is_object() || !record.contains("id") || !record["id"].is_string())
            continue;
        ReviewItem item;
        item.id = record["id"].get<std::string>();
        item.record = record;
        if (record.contains("verdict") && record["verdict"].is_string())
            item.verdict = verdict_from_string(record["verdict"].get<std::string>());
        fs::path obj = p;
        obj.replace_extension(".obj");
        if (fs::exists(obj)) {
            std::ifstream in(obj);
            std::ostringstream ss;
            ss << in.rdbuf();
            item.mesh = ss.str();
        }
        items_[item.id] = std::move(item);
    }
}

void ReviewStore::replay() {
    std::ifstream in(log_path_);
    if (!in)
        return;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        json e;
        try {
            e = json::parse(line);
        } catch (const json::parse_error &) {
            throw Error(ErrorKind::Validation, log_path_ + ":" + std::to_string(lineno) + ": malformed verdict line");
        }
        if (!e.contains("id") || !e.contains("verdict"))
            throw Error(ErrorKind::Validation, log_path_ + ":" + std::to_string(lineno) + ": missing id or verdict");
        auto it = items_.find(e["id"].get<std::string>());
        if (it == items_.end() || it->second.verdict != Verdict::Unreviewed)
            continue;
        it->second.verdict = verdict_from_string(e["verdict"].get<std::string>());
    }
}

std::vector<ReviewItem> ReviewStore::list(std::optional<Verdict> filter) const {
    std::lock_guard lock(mu_);
    std::vector<ReviewItem> out;
    for (const auto &[id, item] : items_) {
        if (!filter || item.verdict == *filter)
            out.push_back(item);
    }
    return out;
}

std::optional<ReviewItem> ReviewStore::get(const std::string &id) const {
    std::lock_guard lock(mu_);
    auto it = items_.find(id);
    if (it == items_.end())
        return std::nullopt;
    return it->second;
}

std::size_t ReviewStore::size() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

VerdictResult ReviewStore::set_verdict(const std::string &id, Verdict v, const std::string &timestamp) {
    if (v == Verdict::Unreviewed)
        return VerdictResult::Invalid;
    std::lock_guard lock(mu_);
    auto it = items_.find(id);
    if (it == items_.end())
        return VerdictResult::NotFound;
    if (it->second.verdict != Verdict::Unreviewed)
        return VerdictResult::Conflict;
    std::ofstream out(log_path_, std::ios::app);
    if (!out)
        throw Error(ErrorKind::IO, "cannot append to " + log_path_);
    out << json{{"id", id}, {"verdict", to_string(v)}, {"timestamp", timestamp}}.dump() << '\n';
    out.flush();
    if (!out)
        throw Error(ErrorKind::IO, "write failed: " + log_path_);
    it->second.verdict = v;
    return VerdictResult::Ok;
}

std::vector<std::string> ReviewStore::export_training_set() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto &[id, item] : items_) {
        if (item.verdict == Verdict::Acceptable)
            out.push_back(id);
    }
    return out;
}

json review_item_json(const ReviewItem &item, bool with_details) {
    json out{{"id", item.id}, {"verdict", to_string(item.verdict)}};
    const json &r = item.record;
    if (r.contains("lift") && r["lift"].contains("reprojection_error"))
        out["reprojection_error"] = r["lift"]["reprojection_error"];
    if (!with_details)
        return out;
    out["keypoints"] = r.value("keypoints", json::array());
    if (r.contains("pose") && r["pose"].contains("x"))
        out["joints3d"] = r["pose"]["x"];
    else if (r.contains("lift"))
        out["joints3d"] = r["lift"].value("joints3d", json::array());
    out["lift"] = r.value("lift", json::object());
    out["pose"] = r.value("pose", json::object());
    out["mesh"] = item.mesh;
    return out;
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace skelpose
