// SPDX-License-Identifier: Apache-2.0
#include <stdint.h>

static volatile uint64_t limit = 1000000;

uint64_t summing_loop_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)
{
    uint64_t sum = 0;
    uint64_t n = limit;
    for (uint64_t i = 1; i <= n; i++)
        sum += i;
    return sum;
}
