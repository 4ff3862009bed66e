#include "rlwav/nn/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace rlwav::nn {

bool Checkpoint::manifest_matches(const Checkpoint &o) const {
    return manifest.size() == o.manifest.size() &&
           std::equal(manifest.begin(), manifest.end(), o.manifest.begin());
}

std::string Checkpoint::manifest_diff(const Checkpoint &a, const Checkpoint &b) {
    std::ostringstream out;
    size_t n = std::max(a.manifest.size(), b.manifest.size());
    for (size_t i = 0; i < n; ++i) {
        auto fmt = [](const ShapeEntry &e) {
            std::string s = e.name + " [";
            for (size_t k = 0; k < e.dims.size(); ++k) s += (k ? "x" : "") + std::to_string(e.dims[k]);
            return s + "]";
        };
        if (i >= a.manifest.size())
            out << "  only in b: " << fmt(b.manifest[i]) << "\n";
        else if (i >= b.manifest.size())
            out << "  only in a: " << fmt(a.manifest[i]) << "\n";
        else if (!(a.manifest[i] == b.manifest[i]))
            out << "  entry " << i << ": " << fmt(a.manifest[i]) << " vs " << fmt(b.manifest[i]) << "\n";
    }
    return out.str();
}

Checkpoint average_checkpoints(const std::vector<const Checkpoint *> &members) {
    if (members.empty()) throw ConfigError("average_checkpoints: empty member list");
    const Checkpoint &first = *members[0];
    for (size_t i = 1; i < members.size(); ++i) {
        if (!first.manifest_matches(*members[i]))
            throw ConfigError("average_checkpoints: manifest mismatch\n" +
                              Checkpoint::manifest_diff(first, *members[i]));
    }
    Checkpoint out;
    out.manifest = first.manifest;
    out.values.resize(first.values.size());
    size_t k = members.size();
    std::vector<double> addends(k);
    for (size_t i = 0; i < out.values.size(); ++i) {
        for (size_t j = 0; j < k; ++j) addends[j] = members[j]->values[i];
        // canonical summation order so the result cannot depend on member order
        std::sort(addends.begin(), addends.end());
        double s = 0;
        for (double a : addends) s += a;
        out.values[i] = float(s / double(k));
    }
    out.meta = "soup(n=" + std::to_string(k) + ")";
    return out;
}

}  // namespace rlwav::nn
