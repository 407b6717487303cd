// SPDX-License-Identifier: Apache-2.0
#include <stdint.h>

/* mem is a zeroed sieve of mem_len bytes; counts primes up to mem_len - 1 */
uint64_t prime_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)
{
    uint64_t n = mem_len - 1;
    for (uint64_t i = 2; i * i <= n; i++) {
        if (mem[i])
            continue;
        for (uint64_t j = i * i; j <= n; j += i)
            mem[j] = 1;
    }
    uint64_t count = 0;
    for (uint64_t i = 2; i <= n; i++)
        count += mem[i] == 0;
    return count;
}
