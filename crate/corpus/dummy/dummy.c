// SPDX-License-Identifier: Apache-2.0
#include <stdint.h>

uint64_t dummy_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)
{
    return 1;
}
