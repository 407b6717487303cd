// SPDX-License-Identifier: Apache-2.0
#include <stdint.h>

static volatile uint64_t start = 25, step = 3;

uint64_t multifact_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)
{
    uint64_t n = start, k = step, acc = 1;
    while (n != 0) {
        acc *= n;
        if (n <= k)
            break;
        n -= k;
    }
    return acc;
}
