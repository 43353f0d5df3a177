#include "streamsign/memtrack.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <new>

namespace streamsign::memtrack {

namespace {

constexpr std::uint32_t slot_count = 1024;
constexpr std::size_t header_size = 32;

struct Slot {
    std::atomic<std::uint32_t> generation{0};
    std::atomic<std::int64_t> current{0};
    std::atomic<std::int64_t> peak{0};
};

// Slots outlive every scope; a stale block freed after its scope was recycled
// fails the generation check and is ignored.
Slot slots[slot_count];
std::atomic<std::uint32_t> next_slot{0};

struct Header {
    void* base;
    std::size_t size;
    std::uint32_t slot;
    std::uint32_t generation;
};
static_assert(sizeof(Header) <= header_size);

struct Active {
    std::uint32_t slot = 0;
    std::uint32_t generation = 0;
    bool enabled = false;
};

thread_local Active active_scope;

void charge(std::uint32_t slot, std::uint32_t generation, std::int64_t delta) noexcept
{
    Slot& s = slots[slot];
    if (s.generation.load(std::memory_order_relaxed) != generation) {
        return;
    }
    std::int64_t now = s.current.fetch_add(delta, std::memory_order_relaxed) + delta;
    if (delta > 0) {
        std::int64_t seen = s.peak.load(std::memory_order_relaxed);
        while (now > seen && !s.peak.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
        }
    }
}

void* allocate(std::size_t size, std::size_t alignment) noexcept
{
    alignment = std::max<std::size_t>(alignment, alignof(std::max_align_t));
    std::size_t extra = header_size + (alignment > alignof(std::max_align_t) ? alignment : 0);
    void* base = std::malloc(size + extra);
    if (base == nullptr) {
        return nullptr;
    }
    auto addr = reinterpret_cast<std::uintptr_t>(base) + header_size;
    addr = (addr + alignment - 1) & ~(static_cast<std::uintptr_t>(alignment) - 1);
    auto* user = reinterpret_cast<char*>(addr);
    Header h{base, size, 0, 0};
    const Active& a = active_scope;
    if (a.enabled) {
        h.slot = a.slot;
        h.generation = a.generation;
        charge(a.slot, a.generation, static_cast<std::int64_t>(size));
    }
    std::memcpy(user - header_size, &h, sizeof h);
    return user;
}

void release(void* ptr) noexcept
{
    if (ptr == nullptr) {
        return;
    }
    Header h;
    std::memcpy(&h, static_cast<char*>(ptr) - header_size, sizeof h);
    if (h.generation != 0) {
        charge(h.slot, h.generation, -static_cast<std::int64_t>(h.size));
    }
    std::free(h.base);
}

void* allocate_or_throw(std::size_t size, std::size_t alignment)
{
    if (size == 0) {
        size = 1;
    }
    for (;;) {
        if (void* p = allocate(size, alignment)) {
            return p;
        }
        std::new_handler handler = std::get_new_handler();
        if (handler == nullptr) {
            throw std::bad_alloc();
        }
        handler();
    }
}

// Saved on the heap-free thread_local stack via the Scope object itself.
thread_local Scope* innermost = nullptr;

} // namespace

Scope::Scope() : previous_(innermost)
{
    slot_ = next_slot.fetch_add(1, std::memory_order_relaxed) % slot_count;
    Slot& s = slots[slot_];
    // Generation 0 marks untracked blocks, so skip it on wrap-around.
    std::uint32_t gen = s.generation.load(std::memory_order_relaxed) + 1;
    if (gen == 0) {
        gen = 1;
    }
    s.current.store(0, std::memory_order_relaxed);
    s.peak.store(0, std::memory_order_relaxed);
    s.generation.store(gen, std::memory_order_relaxed);
    generation_ = gen;
    innermost = this;
    active_scope = Active{slot_, generation_, true};
}

Scope::~Scope()
{
    innermost = previous_;
    if (previous_ != nullptr) {
        active_scope = Active{previous_->slot_, previous_->generation_, true};
    } else {
        active_scope = Active{};
    }
}

std::int64_t Scope::current() const noexcept
{
    return slots[slot_].current.load(std::memory_order_relaxed);
}

std::int64_t Scope::peak() const noexcept
{
    return slots[slot_].peak.load(std::memory_order_relaxed);
}

void Scope::reset_peak() noexcept
{
    Slot& s = slots[slot_];
    s.peak.store(s.current.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

bool active() noexcept { return true; }

} // namespace streamsign::memtrack

using streamsign::memtrack::allocate;
using streamsign::memtrack::allocate_or_throw;
using streamsign::memtrack::release;

void* operator new(std::size_t size) { return allocate_or_throw(size, alignof(std::max_align_t)); }
void* operator new[](std::size_t size) { return allocate_or_throw(size, alignof(std::max_align_t)); }
void* operator new(std::size_t size, std::align_val_t al)
{
    return allocate_or_throw(size, static_cast<std::size_t>(al));
}
void* operator new[](std::size_t size, std::align_val_t al)
{
    return allocate_or_throw(size, static_cast<std::size_t>(al));
}
void* operator new(std::size_t size, const std::nothrow_t&) noexcept
{
    return allocate(size == 0 ? 1 : size, alignof(std::max_align_t));
}
void* operator new[](std::size_t size, const std::nothrow_t&) noexcept
{
    return allocate(size == 0 ? 1 : size, alignof(std::max_align_t));
}
void* operator new(std::size_t size, std::align_val_t al, const std::nothrow_t&) noexcept
{
    return allocate(size == 0 ? 1 : size, static_cast<std::size_t>(al));
}
void* operator new[](std::size_t size, std::align_val_t al, const std::nothrow_t&) noexcept
{
    return allocate(size == 0 ? 1 : size, static_cast<std::size_t>(al));
}

void operator delete(void* p) noexcept { release(p); }
void operator delete[](void* p) noexcept { release(p); }
void operator delete(void* p, std::size_t) noexcept { release(p); }
void operator delete[](void* p, std::size_t) noexcept { release(p); }
void operator delete(void* p, std::align_val_t) noexcept { release(p); }
void operator delete[](void* p, std::align_val_t) noexcept { release(p); }
void operator delete(void* p, std::size_t, std::align_val_t) noexcept { release(p); }
void operator delete[](void* p, std::size_t, std::align_val_t) noexcept { release(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { release(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { release(p); }
void operator delete(void* p, std::align_val_t, const std::nothrow_t&) noexcept { release(p); }
void operator delete[](void* p, std::align_val_t, const std::nothrow_t&) noexcept { release(p); }
