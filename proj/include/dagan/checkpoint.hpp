#pragma once

// Checkpoint container and its binary format:
//   magic "DAGN" | version u32 LE | record count u32 LE | records...
//   record: name length u16 LE | name bytes | dtype u8 (0 = f32) |
//           rank u8 | rank x dim u32 LE | payload (f32 LE)
// Everything is stored as named f32 arrays, including trainer metadata
// (integers that fit f32 exactly; u64 values as four 16-bit limbs).

#include <cstdint>
#include <string>
#include <vector>

namespace dagan {

struct CheckpointRecord {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;
};

class Checkpoint {
  public:
    void add(std::string name, std::vector<int> dims, std::vector<float> data);
    void add_scalar(const std::string& name, double v);
    void add_u64(const std::string& name, std::uint64_t v);  // four u16 limbs, low first

    bool has(const std::string& name) const;
    const CheckpointRecord& at(const std::string& name) const;  // throws if missing
    double scalar(const std::string& name) const;
    std::uint64_t u64_at(const std::string& name) const;

    const std::vector<CheckpointRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

  private:
    std::vector<CheckpointRecord> records_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const std::string& path, const Checkpoint& ck);
Checkpoint checkpoint_load(const std::string& path);

}  // namespace dagan
