#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "skelpose/lifting.h"
#include "skelpose/serialization.h"

namespace skelpose {

struct ReviewItem {
    std::string id;
    json record;        // annotated sample as written by annotate_batch
    std::string mesh;   // OBJ text, empty when no preview exists
    Verdict verdict = Verdict::Unreviewed;
};

enum class VerdictResult { Ok, NotFound, Conflict, Invalid };

// Annotated batch directory plus its append-only verdict log
// (<dir>/verdicts.jsonl). Replaying the log reconstructs every verdict.
class ReviewStore {
  public:
    explicit ReviewStore(const std::string &batch_dir);
    ReviewStore(const std::string &batch_dir, const std::string &log_path);

    std::vector<ReviewItem> list(std::optional<Verdict> filter = std::nullopt) const;
    std::optional<ReviewItem> get(const std::string &id) const;
    std::size_t size() const;

    // Unreviewed → acceptable | bad, once. Appends {"id", "verdict",
    // "timestamp"} to the log before updating memory.
    VerdictResult set_verdict(const std::string &id, Verdict v, const std::string &timestamp);

    // Items cleared for training: acceptable only.
    std::vector<std::string> export_training_set() const;

    const std::string &log_path() const { return log_path_; }

  private:
    void load(const std::string &batch_dir);
    void replay();

    std::string log_path_;
    std::map<std::string, ReviewItem> items_;
    mutable std::mutex mu_;
};

json review_item_json(const ReviewItem &item, bool with_details);
std::string utc_timestamp();

} // namespace skelpose
