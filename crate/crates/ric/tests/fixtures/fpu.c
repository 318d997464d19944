static inline void fload(const double *d)
{
	// size: | 8
	__asm__ volatile ("fld %0" : : "m" (*d));
}
