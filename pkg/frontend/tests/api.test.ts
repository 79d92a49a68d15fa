import { describe, expect, it, vi } from 'vitest'

import { ApiClient, ApiError } from '../src/api.js'

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  })
}

describe('ApiClient', () => {
  it('posts ask payloads and returns the parsed result', async () => {
    const fetchFn = vi.fn().mockResolvedValue(
      jsonResponse(200, { session_id: 's1', response: { sections: {} } }),
    )
    const client = new ApiClient('http://api.test', fetchFn as unknown as typeof fetch)
    const result = await client.ask(null, 'a question')
    expect(result.session_id).toBe('s1')
    expect(fetchFn).toHaveBeenCalledWith(
      'http://api.test/ask',
      expect.objectContaining({ method: 'POST' }),
    )
    const body = JSON.parse((fetchFn.mock.calls[0][1] as RequestInit).body as string)
    expect(body).toEqual({ session_id: null, query: 'a question' })
  })

  it('raises ApiError with the server code verbatim', async () => {
    const fetchFn = vi.fn().mockResolvedValue(
      jsonResponse(409, { error: { code: 'STORE_NOT_LOADED', message: 'no store' } }),
    )
    const client = new ApiClient('http://api.test', fetchFn as unknown as typeof fetch)
    await expect(client.ask(null, 'q')).rejects.toMatchObject({
      code: 'STORE_NOT_LOADED',
      message: 'no store',
    })
  })

  it('wraps network failures as NETWORK_ERROR', async () => {
    const fetchFn = vi.fn().mockRejectedValue(new TypeError('fetch failed'))
    const client = new ApiClient('http://api.test', fetchFn as unknown as typeof fetch)
    await expect(client.health()).rejects.toMatchObject({ code: 'NETWORK_ERROR' })
  })

  it('flags unparseable bodies', async () => {
    const fetchFn = vi.fn().mockResolvedValue(new Response('<html>oops</html>', { status: 200 }))
    const client = new ApiClient('http://api.test', fetchFn as unknown as typeof fetch)
    await expect(client.health()).rejects.toBeInstanceOf(ApiError)
  })

  it('falls back to HTTP status codes when the error body is bare', async () => {
    const fetchFn = vi.fn().mockResolvedValue(jsonResponse(500, {}))
    const client = new ApiClient('http://api.test', fetchFn as unknown as typeof fetch)
    await expect(client.health()).rejects.toMatchObject({ code: 'HTTP_500' })
  })
})
