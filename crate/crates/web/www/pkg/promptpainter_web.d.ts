/* tslint:disable */
/* eslint-disable */

/**
 * Optimizes a toy latent towards a text prompt, one step per call.
 */
export class Stylizer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Current decoded image as RGBA bytes.
     */
    image_rgba(): Uint8Array;
    iteration(): number;
    /**
     * Loss of the most recent step, NaN before the first.
     */
    loss(): number;
    /**
     * `resolution` must be a multiple of 4, at least 32.
     */
    constructor(prompt: string, resolution: number, seed: bigint, learning_rate: number, n_views: number);
    resolution(): number;
    /**
     * Runs one optimization step and returns its loss.
     */
    step(): number;
}

/**
 * One random augmented view of an RGBA image, `crop`×`crop` pixels.
 */
export function augment_view_rgba(rgba: Uint8Array, width: number, height: number, crop: number, perspective_scale: number, flip_probability: number, gaussian_sigma: number, seed: bigint): Uint8Array;

/**
 * Fractal value noise mapped from [-1, 1] to grey levels.
 */
export function fractal_noise_rgba(width: number, height: number, octaves: number, persistence: number, base_frequency: number, seed: bigint): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_stylizer_free: (a: number, b: number) => void;
    readonly augment_view_rgba: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly fractal_noise_rgba: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly stylizer_image_rgba: (a: number) => [number, number, number, number];
    readonly stylizer_iteration: (a: number) => number;
    readonly stylizer_loss: (a: number) => number;
    readonly stylizer_new: (a: number, b: number, c: number, d: bigint, e: number, f: number) => [number, number, number];
    readonly stylizer_resolution: (a: number) => number;
    readonly stylizer_step: (a: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
