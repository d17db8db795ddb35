#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ubd/image.hpp"

namespace ubd {

using Attributes = std::map<std::string, std::string>;

struct ReferenceRecord {
  std::string id;
  Image image;
  LabelMask mask;
  Attributes attributes;
};

/// Images with known ground-truth masks. Ids are unique and every record
/// shares one structure list.
class ReferenceDatabase {
 public:
  ReferenceDatabase() = default;
  explicit ReferenceDatabase(std::vector<ReferenceRecord> records) : records_(std::move(records)) {
    std::set<std::string> ids;
    for (const auto& r : records_) {
      if (!ids.insert(r.id).second) throw InputError("duplicate reference id '" + r.id + "'");
      if (r.image.width() != r.mask.width() || r.image.height() != r.mask.height())
        throw InputError("reference '" + r.id + "': mask dimensions do not match image");
      if (r.mask.structures() != records_.front().mask.structures())
        throw InputError("reference '" + r.id + "': structure list differs from the database");
    }
  }

  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  const std::vector<ReferenceRecord>& records() const { return records_; }
  const ReferenceRecord& at(std::size_t i) const { return records_.at(i); }

  const ReferenceRecord* find(const std::string& id) const {
    for (const auto& r : records_) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }

  /// Copy of the database without the record `id` (if present).
  ReferenceDatabase without(const std::string& id) const {
    std::vector<ReferenceRecord> kept;
    for (const auto& r : records_) {
      if (r.id != id) kept.push_back(r);
    }
    return ReferenceDatabase(std::move(kept));
  }

 private:
  std::vector<ReferenceRecord> records_;
};

}  // namespace ubd
