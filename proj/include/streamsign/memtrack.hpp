#pragma once

#include <cstddef>
#include <cstdint>

namespace streamsign::memtrack {

/// Attributes heap allocations made on the current thread to this scope while
/// it is alive, and records the high-water mark of live tracked bytes.
///
/// Allocations are tagged at allocation time, so a block allocated inside the
/// scope and freed after it ends is handled safely. Only the innermost active
/// scope on a thread is charged. Blocks allocated before the scope opened are
/// not counted even if they are freed inside it.
///
/// Tracking relies on the replacement global operator new/delete compiled
/// into the same translation unit as this class, which the linker pulls in
/// whenever a Scope is used.
class Scope {
public:
    Scope();
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

    /// Live tracked bytes right now.
    std::int64_t current() const noexcept;
    /// Highest value current() reached since construction or the last reset.
    std::int64_t peak() const noexcept;
    void reset_peak() noexcept;

private:
    std::uint32_t slot_;
    std::uint32_t generation_;
    Scope* previous_;
};

/// True when the replacement allocator is linked into this binary.
bool active() noexcept;

} // namespace streamsign::memtrack
