#include "drmob/landuse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>

#include "drmob/csv.hpp"
#include "drmob/errors.hpp"

namespace drmob {

struct TileEvent {
    std::string tile_id;
    std::int32_t hour = 0;
    std::string user_id;
};

}  // namespace drmob

namespace drmob::engine {

template <>
struct RecordTraits<TileEvent> {
    static const Schema<TileEvent>& schema() {
        static const Schema<TileEvent> s({
            {"tile_id", FieldType::string, [](const TileEvent& e, KeyEncoder& k) { k.add(e.tile_id); }},
            {"hour", FieldType::int64, [](const TileEvent& e, KeyEncoder& k) { k.add(e.hour); }},
            {"user_id", FieldType::string, [](const TileEvent& e, KeyEncoder& k) { k.add(e.user_id); }},
        });
        return s;
    }
    static void encode(const TileEvent& e, ByteWriter& w) {
        w.put_string(e.tile_id);
        w.put(e.hour);
        w.put_string(e.user_id);
    }
    static TileEvent decode(ByteReader& r) {
        TileEvent e;
        e.tile_id = r.get_string();
        e.hour = r.get<std::int32_t>();
        e.user_id = r.get_string();
        return e;
    }
};

}  // namespace drmob::engine

namespace drmob {

CountMode parse_count_mode(std::string_view s) {
    if (s == "pings") return CountMode::pings;
    if (s == "distinct_users") return CountMode::distinct_users;
    throw ConfigError("count_mode must be 'pings' or 'distinct_users', got '" + std::string(s) + "'");
}

Linkage parse_linkage(std::string_view s) {
    if (s == "ward") return Linkage::ward;
    if (s == "average") return Linkage::average;
    throw ConfigError("linkage must be 'ward' or 'average', got '" + std::string(s) + "'");
}

Metric parse_metric(std::string_view s) {
    if (s == "euclidean") return Metric::euclidean;
    if (s == "cosine") return Metric::cosine;
    throw ConfigError("metric must be 'euclidean' or 'cosine', got '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Profiles

namespace {

struct HourCounts {
    using Acc = std::pair<std::string, std::array<std::uint64_t, kHoursPerWeek>>;
    Acc init(const TileEvent& e) const {
        Acc a{e.tile_id, {}};
        ++a.second[static_cast<std::size_t>(e.hour)];
        return a;
    }
    void fold(Acc& a, const TileEvent& e) const { ++a.second[static_cast<std::size_t>(e.hour)]; }
    void merge(Acc& a, Acc&& b) const {
        for (std::size_t h = 0; h < kHoursPerWeek; ++h) a.second[h] += b.second[h];
    }
};

struct Presence {
    using Acc = std::pair<std::string, std::int32_t>;
    Acc init(const TileEvent& e) const { return {e.tile_id, e.hour}; }
    void fold(Acc&, const TileEvent&) const {}
    void merge(Acc&, Acc&&) const {}
};

}  // namespace

std::vector<ActivityProfile> tile_activity_profiles(const engine::Dataset<Ping>& pings,
                                                    std::shared_ptr<const Tessellation> tess,
                                                    const LocalClock& clock, CountMode mode) {
    const bool keep_user = mode == CountMode::distinct_users;
    auto events = engine::map_partitions(
        pings,
        [tess, clock, keep_user](const Ping& p) -> std::optional<TileEvent> {
            auto i = tess->locate(p.lon, p.lat);
            if (!i) return std::nullopt;
            return TileEvent{tess->tiles()[*i].tile_id, hour_of_week(p.timestamp, clock),
                             keep_user ? p.user_id : std::string()};
        },
        "assign_tiles");

    std::map<std::string, ActivityProfile> by_tile;
    if (mode == CountMode::pings) {
        for (auto& [key, acc] : engine::reduce_by_key(events, "tile_id", HourCounts{}, "profiles").get()) {
            auto& prof = by_tile[acc.first];
            prof.tile_id = acc.first;
            for (std::size_t h = 0; h < kHoursPerWeek; ++h) prof.bins[h] = static_cast<double>(acc.second[h]);
        }
    } else {
        for (auto& [key, acc] :
             engine::reduce_by_key(events, "tile_id,hour,user_id", Presence{}, "profiles").get()) {
            auto& prof = by_tile[acc.first];
            prof.tile_id = acc.first;
            prof.bins[static_cast<std::size_t>(acc.second)] += 1.0;
        }
    }
    std::vector<ActivityProfile> out;
    out.reserve(by_tile.size());
    for (auto& [id, prof] : by_tile) {
        prof.total_events = static_cast<std::uint64_t>(std::accumulate(prof.bins.begin(), prof.bins.end(), 0.0));
        out.push_back(std::move(prof));
    }
    return out;
}

std::map<std::string, std::size_t> tile_user_counts(const engine::Dataset<Ping>& pings,
                                                    std::shared_ptr<const Tessellation> tess) {
    auto events = engine::map_partitions(
        pings,
        [tess](const Ping& p) -> std::optional<TileEvent> {
            auto i = tess->locate(p.lon, p.lat);
            if (!i) return std::nullopt;
            return TileEvent{tess->tiles()[*i].tile_id, 0, p.user_id};
        },
        "assign_tiles");
    std::map<std::string, std::size_t> out;
    for (auto& [key, acc] : engine::reduce_by_key(events, "tile_id,user_id", Presence{}, "tile_users").get())
        ++out[acc.first];
    return out;
}

std::vector<ActivityProfile> normalize_profiles(std::vector<ActivityProfile> profiles,
                                                std::vector<std::string>* excluded) {
    std::vector<ActivityProfile> out;
    out.reserve(profiles.size());
    for (auto& p : profiles) {
        const double sum = std::accumulate(p.bins.begin(), p.bins.end(), 0.0);
        if (!(sum > 0.0)) {
            if (excluded) excluded->push_back(p.tile_id);
            continue;
        }
        for (auto& b : p.bins) b /= sum;
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Clustering

namespace {

double euclidean(const WeekBins& a, const WeekBins& b) {
    double s = 0;
    for (std::size_t h = 0; h < kHoursPerWeek; ++h) s += (a[h] - b[h]) * (a[h] - b[h]);
    return std::sqrt(s);
}

double cosine(const WeekBins& a, const WeekBins& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t h = 0; h < kHoursPerWeek; ++h) {
        dot += a[h] * b[h];
        na += a[h] * a[h];
        nb += b[h] * b[h];
    }
    if (na == 0 || nb == 0) return 1.0;
    return std::max(0.0, 1.0 - dot / std::sqrt(na * nb));
}

/// Active clusters live in the slot of their smallest leaf, so slot == representative.
class Agglomerator {
public:
    Agglomerator(const std::vector<const WeekBins*>& rows, Linkage linkage, Metric metric)
        : n_(rows.size()), linkage_(linkage), size_(n_, 1), node_(n_), active_(n_, true) {
        std::iota(node_.begin(), node_.end(), 0);
        if (linkage == Linkage::ward) {
            centroid_.reserve(n_);
            for (const auto* r : rows) centroid_.push_back(*r);
        } else {
            matrix_.assign(n_ * (n_ - 1) / 2, 0.0);
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = i + 1; j < n_; ++j)
                    at(i, j) = metric == Metric::cosine ? cosine(*rows[i], *rows[j]) : euclidean(*rows[i], *rows[j]);
        }
    }

    struct Step {
        std::size_t node_a, node_b;  // a has the smaller representative
        std::size_t rep_a, rep_b;
        double distance;
        std::size_t size;
    };

    std::vector<Step> run() {
        std::vector<Step> steps;
        std::vector<std::size_t> chain;
        std::size_t remaining = n_;
        std::size_t next_node = n_;
        while (remaining > 1) {
            if (chain.empty())
                for (std::size_t s = 0; s < n_; ++s)
                    if (active_[s]) {
                        chain.push_back(s);
                        break;
                    }
            const std::size_t x = chain.back();
            const std::optional<std::size_t> prev =
                chain.size() > 1 ? std::optional(chain[chain.size() - 2]) : std::nullopt;
            std::size_t best = n_;
            double best_d = 0;
            for (std::size_t s = 0; s < n_; ++s) {
                if (!active_[s] || s == x) continue;
                const double d = dist(x, s);
                if (best == n_ || d < best_d) {
                    best = s;
                    best_d = d;
                }
            }
            if (prev && dist(x, *prev) <= best_d) best = *prev;
            if (prev && best == *prev) {
                chain.pop_back();
                chain.pop_back();
                const std::size_t a = std::min(x, best), b = std::max(x, best);
                steps.push_back({node_[a], node_[b], a, b, best_d, size_[a] + size_[b]});
                merge(a, b);
                node_[a] = next_node++;
                --remaining;
            } else {
                chain.push_back(best);
            }
        }
        return steps;
    }

private:
    double& at(std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return matrix_[i * (2 * n_ - i - 1) / 2 + (j - i - 1)];
    }

    double dist(std::size_t a, std::size_t b) {
        if (linkage_ == Linkage::average) return at(a, b);
        const double na = static_cast<double>(size_[a]), nb = static_cast<double>(size_[b]);
        return std::sqrt(2.0 * na * nb / (na + nb)) * euclidean(centroid_[a], centroid_[b]);
    }

    void merge(std::size_t a, std::size_t b) {
        const double na = static_cast<double>(size_[a]), nb = static_cast<double>(size_[b]);
        if (linkage_ == Linkage::ward) {
            for (std::size_t h = 0; h < kHoursPerWeek; ++h)
                centroid_[a][h] = (na * centroid_[a][h] + nb * centroid_[b][h]) / (na + nb);
        } else {
            for (std::size_t s = 0; s < n_; ++s)
                if (active_[s] && s != a && s != b) at(a, s) = (na * at(a, s) + nb * at(b, s)) / (na + nb);
        }
        size_[a] += size_[b];
        active_[b] = false;
    }

    std::size_t n_;
    Linkage linkage_;
    std::vector<std::size_t> size_;
    std::vector<std::size_t> node_;
    std::vector<bool> active_;
    std::vector<WeekBins> centroid_;
    std::vector<double> matrix_;
};

}  // namespace

std::map<std::string, std::size_t> LandUseClustering::label_map() const {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < tile_ids.size(); ++i) m[tile_ids[i]] = labels[i];
    return m;
}

LandUseClustering hierarchical_cluster(const std::vector<ActivityProfile>& profiles, std::size_t k, Linkage linkage,
                                       Metric metric) {
    const std::size_t n = profiles.size();
    if (k < 1 || k > n) throw ConfigError("k must be in [1, " + std::to_string(n) + "], got " + std::to_string(k));
    if (linkage == Linkage::ward && metric != Metric::euclidean)
        throw ConfigError("ward linkage requires the euclidean metric");

    std::vector<const ActivityProfile*> sorted;
    for (const auto& p : profiles) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const ActivityProfile* a, const ActivityProfile* b) { return a->tile_id < b->tile_id; });
    for (std::size_t i = 1; i < n; ++i)
        if (sorted[i]->tile_id == sorted[i - 1]->tile_id)
            throw DataError("duplicate profile for tile '" + sorted[i]->tile_id + "'");

    LandUseClustering out;
    out.k = k;
    std::vector<const WeekBins*> rows;
    for (const auto* p : sorted) {
        out.tile_ids.push_back(p->tile_id);
        rows.push_back(&p->bins);
    }

    auto steps = Agglomerator(rows, linkage, metric).run();

    // Emit merges by (distance, representatives) while respecting dependencies.
    std::vector<std::size_t> producer(2 * n, SIZE_MAX);  // temporary node -> step index
    for (std::size_t i = 0; i < steps.size(); ++i) producer[n + i] = i;
    std::vector<std::vector<std::size_t>> dependents(steps.size());
    std::vector<int> pending(steps.size(), 0);
    for (std::size_t i = 0; i < steps.size(); ++i)
        for (std::size_t node : {steps[i].node_a, steps[i].node_b})
            if (node >= n) {
                dependents[producer[node]].push_back(i);
                ++pending[i];
            }
    using Key = std::tuple<double, std::size_t, std::size_t, std::size_t>;
    std::priority_queue<Key, std::vector<Key>, std::greater<>> ready;
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (pending[i] == 0) ready.emplace(steps[i].distance, steps[i].rep_a, steps[i].rep_b, i);
    std::vector<std::size_t> final_id(2 * n);
    std::iota(final_id.begin(), final_id.begin() + static_cast<std::ptrdiff_t>(n), 0);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        const std::size_t i = std::get<3>(ready.top());
        ready.pop();
        final_id[n + i] = n + order.size();
        order.push_back(i);
        for (std::size_t d : dependents[i])
            if (--pending[d] == 0) ready.emplace(steps[d].distance, steps[d].rep_a, steps[d].rep_b, d);
    }
    for (std::size_t i : order)
        out.merge_tree.push_back(
            {final_id[steps[i].node_a], final_id[steps[i].node_b], steps[i].distance, steps[i].size});

    // Cut after n-k merges.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t s = 0; s < n - k; ++s) {
        const auto& st = steps[order[s]];
        const std::size_t a = find(st.rep_a), b = find(st.rep_b);
        parent[std::max(a, b)] = std::min(a, b);
    }
    std::map<std::size_t, std::size_t> sizes;  // root (= smallest leaf) -> size
    for (std::size_t i = 0; i < n; ++i) ++sizes[find(i)];
    std::vector<std::pair<std::size_t, std::size_t>> ranked(sizes.begin(), sizes.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::map<std::size_t, std::size_t> label_of;
    for (std::size_t l = 0; l < ranked.size(); ++l) label_of[ranked[l].first] = l;
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.labels[i] = label_of[find(i)];
    return out;
}

std::vector<WeekBins> cluster_signatures(const std::vector<ActivityProfile>& profiles,
                                         const LandUseClustering& clustering) {
    const auto labels = clustering.label_map();
    std::vector<WeekBins> sums(clustering.k, WeekBins{});
    std::vector<std::size_t> counts(clustering.k, 0);
    for (const auto& p : profiles) {
        auto it = labels.find(p.tile_id);
        if (it == labels.end()) throw PreconditionError("tile '" + p.tile_id + "' is not in the clustering");
        for (std::size_t h = 0; h < kHoursPerWeek; ++h) sums[it->second][h] += p.bins[h];
        ++counts[it->second];
    }
    for (std::size_t c = 0; c < clustering.k; ++c)
        if (counts[c])
            for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
    return sums;
}

void write_profiles_csv(std::ostream& out, const std::vector<ActivityProfile>& profiles) {
    out << "tile_id";
    for (std::size_t h = 0; h < kHoursPerWeek; ++h) out << ",h" << h;
    out << ",total_events\n";
    for (const auto& p : profiles) {
        std::vector<std::string> f{p.tile_id};
        for (double b : p.bins) f.push_back(csv::num(b));
        f.push_back(csv::num(p.total_events));
        csv::row(out, f);
    }
}

void write_labels_csv(std::ostream& out, const LandUseClustering& c) {
    out << "tile_id,cluster\n";
    for (std::size_t i = 0; i < c.tile_ids.size(); ++i)
        csv::row(out, {c.tile_ids[i], csv::num(std::uint64_t{c.labels[i]})});
}

void write_merge_tree_csv(std::ostream& out, const LandUseClustering& c) {
    out << "step,left,right,distance\n";
    for (std::size_t s = 0; s < c.merge_tree.size(); ++s) {
        const auto& m = c.merge_tree[s];
        csv::row(out, {csv::num(std::uint64_t{s}), csv::num(std::uint64_t{m.left}), csv::num(std::uint64_t{m.right}),
                       csv::num(m.distance)});
    }
}

}  // namespace drmob
