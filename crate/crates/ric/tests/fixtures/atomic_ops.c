/* compare-and-swap, 64-bit */
AO_INLINE int
AO_compare_double_and_swap_double_full(volatile AO_double_t *addr,
                                       AO_t old_val1, AO_t old_val2,
                                       AO_t new_val1, AO_t new_val2)
{
  char result;
  // size: 8 1 | 8 4 4 4 4
  __asm__ __volatile__("xchg %%ebx,%6; lock; cmpxchg8b %0; setz %1; xchg %%ebx,%6"
                       : "=m" (*addr), "=a" (result)
                       : "m" (*addr), "d" (old_val2), "a" (old_val1),
                         "c" (new_val2), "D" (new_val1)
                       : "memory");
  return (int) result;
}
