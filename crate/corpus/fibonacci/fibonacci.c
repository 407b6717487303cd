// SPDX-License-Identifier: Apache-2.0
#include <stdint.h>

static volatile uint64_t rounds = 50;

uint64_t fibonacci_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)
{
    uint64_t x = 0, y = 1;
    for (uint64_t n = rounds; n != 0; n--) {
        uint64_t t = x + y;
        x = y;
        y = t;
    }
    return x;
}
