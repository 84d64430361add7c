// Dismissible error banners. Budget exhaustion and empty wallets get
// visually distinct classes so the two failure modes are unmistakable.

const CLASS_BY_CODE: Record<string, string> = {
  budget_exceeded: 'banner-budget',
  insufficient_funds: 'banner-funds',
}

export function showBanner(
  doc: Document,
  container: HTMLElement,
  code: string,
  message: string,
): HTMLElement {
  const banner = doc.createElement('div')
  banner.className = `banner ${CLASS_BY_CODE[code] ?? 'banner-error'}`
  banner.dataset.code = code

  const text = doc.createElement('span')
  text.textContent = message
  banner.appendChild(text)

  const close = doc.createElement('button')
  close.className = 'banner-close'
  close.type = 'button'
  close.textContent = '✕'
  close.addEventListener('click', () => banner.remove())
  banner.appendChild(close)

  container.appendChild(banner)
  return banner
}
