//! Vector-register housekeeping around the faer kernels.

/// Clears the upper halves of the AVX registers.
///
/// faer's runtime-dispatched AVX kernels can return with them dirty. Code
/// built for baseline x86-64 then pays a state-transition penalty on every
/// SSE instruction; the kernel-extension loop ran 15x slower after an
/// eigensolve on the same thread.
#[inline]
pub(crate) fn clear_upper_avx() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the CPU supports AVX, and every vector register is
        // declared clobbered, so no live value is held across the call.
        unsafe { std::arch::asm!("vzeroupper", clobber_abi("C"), options(nomem, nostack, preserves_flags)) };
    }
}
