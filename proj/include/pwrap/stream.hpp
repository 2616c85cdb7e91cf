#pragma once

#include <optional>

#include "pwrap/framing.hpp"
#include "pwrap/sim_kernel.hpp"

namespace pwrap {

/// Registered valid/ready channel between two link-domain components. A word
/// moves on an edge iff, as of the previous edge, the source presented it and
/// the sink asserted ready. Both sides evaluate transfer() on committed
/// values, so they always agree. The source owns (and commits) `data`, the
/// sink owns `ready`.
struct StreamChannel {
    Register<std::optional<FramedWord>> data;
    Register<bool> ready{false};

    bool transfer() const { return data.get().has_value() && ready.get(); }
};

}  // namespace pwrap
