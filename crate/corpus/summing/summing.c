// SPDX-License-Identifier: Apache-2.0
#include <stdint.h>

/* mem holds mem_len / 8 little-endian u64 values */
uint64_t summing_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)
{
    const uint64_t *values = (const uint64_t *)mem;
    uint64_t sum = 0;
    for (uint64_t i = 0; i < mem_len / 8; i++)
        sum += values[i];
    return sum;
}
