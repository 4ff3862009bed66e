#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlwav/common.hpp"

namespace rlwav::nn {

struct ShapeEntry {
    std::string name;
    std::vector<uint32_t> dims;
    size_t offset = 0;

    size_t volume() const {
        size_t v = 1;
        for (auto d : dims) v *= d;
        return v;
    }
    bool operator==(const ShapeEntry &o) const { return name == o.name && dims == o.dims; }
};

// Flat parameter vector plus the shape manifest describing it. This is the
// in-memory form of a checkpoint and the unit AdamW and soup averaging act on.
struct Checkpoint {
    std::vector<ShapeEntry> manifest;
    std::vector<float> values;
    std::string meta;

    bool manifest_matches(const Checkpoint &o) const;
    // human-readable diff of two manifests (empty when identical)
    static std::string manifest_diff(const Checkpoint &a, const Checkpoint &b);
};

// element-wise uniform mean; manifests must match exactly
Checkpoint average_checkpoints(const std::vector<const Checkpoint *> &members);

// Parameter storage for one network. Modules register named blocks at build
// time and later access them through their offsets. The generation counter
// advances on every in-place update so cached derived data (e.g. transposed
// weight blocks) can detect staleness.
template <typename T>
class ParamStore {
  public:
    size_t add(const std::string &name, std::vector<uint32_t> dims) {
        ShapeEntry e{name, std::move(dims), total_};
        total_ += e.volume();
        manifest_.push_back(e);
        values_.resize(total_, T(0));
        return manifest_.back().offset;
    }

    T *data() { return values_.data(); }
    const T *data() const { return values_.data(); }
    size_t size() const { return total_; }
    const std::vector<ShapeEntry> &manifest() const { return manifest_; }

    uint64_t generation() const { return generation_; }
    void bump_generation() { ++generation_; }

    Checkpoint to_checkpoint(std::string meta = {}) const {
        Checkpoint ck;
        ck.manifest = manifest_;
        ck.values.assign(values_.begin(), values_.end());
        ck.meta = std::move(meta);
        return ck;
    }

    void load(const Checkpoint &ck) {
        if (ck.manifest.size() != manifest_.size())
            throw ConfigError("checkpoint manifest mismatch: entry count");
        for (size_t i = 0; i < manifest_.size(); ++i)
            if (!(ck.manifest[i] == manifest_[i]))
                throw ConfigError("checkpoint manifest mismatch at '" + manifest_[i].name + "'");
        values_.assign(ck.values.begin(), ck.values.end());
        bump_generation();
    }

  private:
    std::vector<ShapeEntry> manifest_;
    std::vector<T> values_;
    size_t total_ = 0;
    uint64_t generation_ = 1;
};

}  // namespace rlwav::nn
