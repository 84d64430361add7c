// Display rounding only; full-precision values stay in title attributes.

export function fmt(value: number, digits = 6): string {
  if (!Number.isFinite(value)) return String(value)
  const rounded = value.toFixed(digits)
  // Trim trailing zeros but keep at least one decimal for floats.
  return rounded.replace(/(\.\d*?)0+$/, '$1').replace(/\.$/, '.0')
}

export function shortAddress(address: string): string {
  return address.length > 14 ? `${address.slice(0, 8)}…${address.slice(-6)}` : address
}
