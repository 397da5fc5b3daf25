"""One-shot face reenactment with appearance adaptive normalization."""
