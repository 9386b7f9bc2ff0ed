/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_stylizer_free: (a: number, b: number) => void;
export const augment_view_rgba: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
export const fractal_noise_rgba: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
export const stylizer_image_rgba: (a: number) => [number, number, number, number];
export const stylizer_iteration: (a: number) => number;
export const stylizer_loss: (a: number) => number;
export const stylizer_new: (a: number, b: number, c: number, d: bigint, e: number, f: number) => [number, number, number];
export const stylizer_resolution: (a: number) => number;
export const stylizer_step: (a: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
