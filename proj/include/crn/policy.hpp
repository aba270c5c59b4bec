#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "crn/rng.hpp"

namespace crn::policy {

enum class Mode : int { ActiveRadar = 1, PassiveEsm = 2 };

inline constexpr std::size_t arm_index(Mode m) { return m == Mode::ActiveRadar ? 0 : 1; }
inline constexpr Mode arm_mode(std::size_t i) { return i == 0 ? Mode::ActiveRadar : Mode::PassiveEsm; }
const char* mode_name(Mode m);

/// -sum x log2 x / log2 n, with 0 log 0 = 0. Throws for fewer than two states.
double shannon_entropy_normalized(std::span<const double> distribution);

/// Reward pair for one node: mean entropy of its tracks' motion and signal
/// stationary estimates. No tracks gives (0, 0).
struct TrackEstimates {
    std::vector<double> motion;
    std::vector<double> signal;
};
std::pair<double, double> centralized_reward(std::span<const TrackEstimates> tracks);

/// Two-armed UCB1 statistics for one node.
struct BanditState {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<int, 2> count{0, 0};
    int t = 0;  // global step count used in the exploration bonus
};

/// Unpulled arms first (radar before ESM); otherwise argmax of mean + sqrt(ln t / N),
/// ties to ActiveRadar.
Mode ucb_select(const BanditState& state);

/// Incremental mean update of the pulled arm.
void ucb_record(BanditState& state, Mode pulled, double reward);

/// Per-track input to the distributed utility.
struct TrackAgeClass {
    int age = 1;                                  // steps since confirmation, >= 1
    std::optional<double> class_motion_entropy;   // entropy of the class motion stationary, if classified
};

/// (1/#M) sum over tracks of [f, 1 - f] / age, f = class motion entropy or gamma;
/// no tracks gives (gamma, 1 - gamma).
std::pair<double, double> distributed_utility(std::span<const TrackAgeClass> tracks, double gamma);

/// Bernoulli draw over normalized weights. Throws std::invalid_argument when both are zero.
Mode sample_mode(std::pair<double, double> weights, Rng& rng);

enum class BaselineKind { RadarOnly, RandomP };
Mode baseline_select(BaselineKind kind, double p, Rng& rng);

struct LatencyModel {
    double sigma = 0.0;  // lognormal shape; mu fixed at 0
};

/// Raw lognormal delay in seconds (0 when sigma == 0).
double sample_latency(const LatencyModel& model, Rng& rng);

template <typename Payload>
struct DelayedEvent {
    Payload payload;
    int emit_time = 0;
    int deliver_time = 0;
};

/// sigma == 0 delivers at emit time; otherwise emit + ceil(t_L / dt) steps.
template <typename Payload>
DelayedEvent<Payload> apply_latency(Payload payload, int emit_time, const LatencyModel& model, Rng& rng,
                                    double dt = 1.0) {
    DelayedEvent<Payload> e{std::move(payload), emit_time, emit_time};
    if (model.sigma > 0.0) {
        const double steps = std::ceil(sample_latency(model, rng) / dt);
        // Clamp pathological tails so the step counter cannot overflow.
        e.deliver_time = emit_time + static_cast<int>(std::min(steps, 1e8));
    }
    return e;
}

/// FIFO-stable priority queue of delayed events ordered by delivery time.
template <typename Payload>
class DeliveryQueue {
public:
    void push(DelayedEvent<Payload> e) { heap_.push(Entry{std::move(e), seq_++}); }

    /// Pops every event with deliver_time <= now, in (deliver_time, emission order).
    std::vector<DelayedEvent<Payload>> drain(int now) {
        std::vector<DelayedEvent<Payload>> out;
        while (!heap_.empty() && heap_.top().event.deliver_time <= now) {
            out.push_back(heap_.top().event);
            heap_.pop();
        }
        return out;
    }
    std::size_t size() const { return heap_.size(); }
    bool empty() const { return heap_.empty(); }

private:
    struct Entry {
        DelayedEvent<Payload> event;
        std::uint64_t seq;
        bool operator<(const Entry& o) const {
            if (event.deliver_time != o.event.deliver_time) return event.deliver_time > o.event.deliver_time;
            return seq > o.seq;
        }
    };
    std::priority_queue<Entry> heap_;
    std::uint64_t seq_ = 0;
};

}  // namespace crn::policy
